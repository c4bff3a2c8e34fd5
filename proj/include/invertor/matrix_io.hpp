#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "invertor/dense.hpp"

namespace invertor {

enum class MatrixFormat { Text, Binary };

// Text: "rows cols" then one whitespace-separated line per row.
// Binary: "BMAT", u64 rows, u64 cols (little endian), then row-major
// little-endian IEEE-754 doubles.

void write_text(std::ostream& os, const DenseMatrix& m);
DenseMatrix read_text(std::istream& is);

void write_binary(std::ostream& os, const DenseMatrix& m);
DenseMatrix read_binary(std::istream& is);

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, MatrixFormat format);

/// Detects the format from the leading magic.
DenseMatrix load_matrix(const std::filesystem::path& path);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

/// Hash of dimensions and element bit patterns.
std::uint64_t matrix_hash(const DenseMatrix& m) noexcept;

std::string hex64(std::uint64_t v);

}  // namespace invertor
