#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tokengray/matrix.hpp"

namespace tg {

// Binary matrix container: 8-byte magic "TGMATRX1", u32 rows, u32 cols,
// little-endian f64 row-major payload.
void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

// CSV text form for interop, one row per line.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

// Checkpoint container: 8-byte magic "TGCKPT01", u32 record count, then per
// record u32 name length, name bytes, u32 rows, u32 cols, f64 payload.
using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

void write_checkpoint(const std::string& path, const NamedMatrices& records);
NamedMatrices read_checkpoint(const std::string& path);

// FNV-1a over the serialized byte stream; used to verify that ablation arms
// start from identical weights.
std::uint64_t checkpoint_hash(const NamedMatrices& records);

}  // namespace tg
