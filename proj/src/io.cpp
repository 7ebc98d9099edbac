#include "tokengray/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tg {

namespace {

constexpr char kMatrixMagic[8] = {'T', 'G', 'M', 'A', 'T', 'R', 'X', '1'};
constexpr char kCkptMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(sizeof(double) == 8);

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("matrix container: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("matrix container: truncated payload");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void write_matrix_body(std::ostream& os, const Matrix& m) {
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.raw()) put_f64(os, v);
}

Matrix read_matrix_body(std::istream& is) {
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1ULL << 30)) {
    throw std::runtime_error("matrix container: implausible shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
  }
  Matrix m(static_cast<int>(rows), static_cast<int>(cols));
  for (double& v : m.raw()) v = get_f64(is);
  return m;
}

}  // namespace

void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_matrix: cannot open " + path);
  os.write(kMatrixMagic, 8);
  write_matrix_body(os, m);
  if (!os) throw std::runtime_error("write_matrix: write failed for " + path);
}

Matrix read_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_matrix: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMatrixMagic, 8) != 0) {
    throw std::runtime_error("read_matrix: bad magic in " + path);
  }
  return read_matrix_body(is);
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_matrix_csv: cannot open " + path);
  os.precision(17);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << m(r, c);
    }
    os << '\n';
  }
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_matrix_csv: cannot open " + path);
  std::vector<double> data;
  std::string line;
  int cols = -1, rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int this_cols = 0;
    while (std::getline(ss, cell, ',')) {
      data.push_back(std::stod(cell));
      ++this_cols;
    }
    if (cols < 0) cols = this_cols;
    if (this_cols != cols) {
      throw std::runtime_error("read_matrix_csv: ragged row " + std::to_string(rows) + " in " +
                               path);
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("read_matrix_csv: empty file " + path);
  return Matrix(rows, cols, std::move(data));
}

void write_checkpoint(const std::string& path, const NamedMatrices& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  os.write(kCkptMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, m] : records) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_matrix_body(os, m);
  }
  if (!os) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

NamedMatrices read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw std::runtime_error("read_checkpoint: bad magic in " + path);
  }
  const std::uint32_t count = get_u32(is);
  NamedMatrices records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw std::runtime_error("read_checkpoint: truncated record name");
    records.emplace_back(std::move(name), read_matrix_body(is));
  }
  return records;
}

std::uint64_t checkpoint_hash(const NamedMatrices& records) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [name, m] : records) {
    mix(name.data(), name.size());
    const int dims[2] = {m.rows(), m.cols()};
    mix(dims, sizeof(dims));
    mix(m.data(), m.size() * sizeof(double));
  }
  return h;
}

}  // namespace tg
