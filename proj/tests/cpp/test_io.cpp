#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tokengray/io.hpp"
#include "tokengray/rng.hpp"

using namespace tg;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("binary matrix round-trip is bit exact") {
  Matrix m = random_gaussian(7, 13, {400, 0});
  const std::string path = tmp_path("tg_io_roundtrip.bin");
  write_matrix(path, m);
  Matrix back = read_matrix(path);
  CHECK(max_abs_diff(m, back) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("csv matrix round-trip is exact at precision 17") {
  Matrix m = random_gaussian(5, 4, {401, 0});
  const std::string path = tmp_path("tg_io_roundtrip.csv");
  write_matrix_csv(path, m);
  CHECK(max_abs_diff(m, read_matrix_csv(path)) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("corrupt magic is rejected") {
  const std::string path = tmp_path("tg_io_badmagic.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC" << std::string(16, '\0');
  }
  CHECK_THROWS(read_matrix(path));
  std::remove(path.c_str());
}

TEST_CASE("ragged csv rows are rejected") {
  const std::string path = tmp_path("tg_io_ragged.csv");
  {
    std::ofstream out(path);
    out << "1,2,3\n4,5\n";
  }
  CHECK_THROWS(read_matrix_csv(path));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint round-trip preserves names, order, and payload") {
  NamedMatrices records{{"alpha", random_gaussian(3, 3, {402, 0})},
                        {"beta", random_gaussian(1, 5, {402, 1})}};
  const std::string path = tmp_path("tg_io_ckpt.bin");
  write_checkpoint(path, records);
  NamedMatrices back = read_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "alpha");
  CHECK(back[1].first == "beta");
  CHECK(max_abs_diff(back[0].second, records[0].second) == 0.0);
  CHECK(max_abs_diff(back[1].second, records[1].second) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint hash is stable and sensitive") {
  NamedMatrices records{{"w", random_gaussian(4, 4, {403, 0})}};
  const std::uint64_t h = checkpoint_hash(records);
  CHECK(h == checkpoint_hash(records));
  records[0].second(0, 0) += 1e-12;
  CHECK(h != checkpoint_hash(records));
}
