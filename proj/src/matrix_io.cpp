#include "invertor/matrix_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace invertor {

namespace {

constexpr std::array<char, 4> kMagic{'B', 'M', 'A', 'T'};

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw FormatError("truncated binary header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void check_finite(const DenseMatrix& m) {
    if (!m.all_finite()) throw FormatError("matrix contains non-finite entries");
}

}  // namespace

void write_text(std::ostream& os, const DenseMatrix& m) {
    os << m.rows() << ' ' << m.cols() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            // %.17g round-trips every double.
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j) os << ' ';
            os << buf;
        }
        os << '\n';
    }
}

DenseMatrix read_text(std::istream& is) {
    long long rows = 0;
    long long cols = 0;
    if (!(is >> rows >> cols)) throw FormatError("missing 'rows cols' header");
    if (rows <= 0 || cols <= 0) throw FormatError("matrix dimensions must be positive");
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(rows * cols));
    std::string tok;
    for (long long k = 0; k < rows * cols; ++k) {
        if (!(is >> tok)) throw FormatError("expected " + std::to_string(rows * cols) + " values");
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') throw FormatError("bad scalar '" + tok + "'");
        data.push_back(v);
    }
    if (is >> tok) throw FormatError("trailing data after matrix");
    DenseMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
    check_finite(m);
    return m;
}

void write_binary(std::ostream& os, const DenseMatrix& m) {
    os.write(kMagic.data(), kMagic.size());
    put_u64(os, m.rows());
    put_u64(os, m.cols());
    for (double v : m.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

DenseMatrix read_binary(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) throw FormatError("missing BMAT magic");
    const std::uint64_t rows = get_u64(is);
    const std::uint64_t cols = get_u64(is);
    if (rows == 0 || cols == 0) throw FormatError("matrix dimensions must be positive");
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw FormatError("implausible dimensions");
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = std::bit_cast<double>(get_u64(is));
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing data after matrix");
    DenseMatrix m(rows, cols, std::move(data));
    check_finite(m);
    return m;
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m, MatrixFormat format) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    if (format == MatrixFormat::Binary) {
        write_binary(os, m);
    } else {
        write_text(os, m);
    }
    if (!os.flush()) throw FormatError("write failed: " + path.string());
}

DenseMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    std::array<char, 4> head{};
    is.read(head.data(), 4);
    const bool binary = is.gcount() == 4 && head == kMagic;
    is.clear();
    is.seekg(0);
    try {
        return binary ? read_binary(is) : read_text(is);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t matrix_hash(const DenseMatrix& m) noexcept {
    const std::uint64_t dims[2] = {m.rows(), m.cols()};
    std::uint64_t h = fnv1a64(dims, sizeof dims);
    return fnv1a64(m.data().data(), m.data().size_bytes(), h);
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace invertor
