#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace invertor {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

class ScratchTooSmall : public Error {
  public:
    using Error::Error;
};

class InvalidOrder : public Error {
  public:
    using Error::Error;
};

class IndexOutOfRange : public Error {
  public:
    using Error::Error;
};

class MalformedLoopid : public Error {
  public:
    using Error::Error;
};

class BlockShapeMismatch : public Error {
  public:
    using Error::Error;
};

class MissingProvisionalData : public Error {
  public:
    using Error::Error;
};

class InsufficientData : public Error {
  public:
    using Error::Error;
};

/// Malformed matrix file, unreadable path, bad magic.
class FormatError : public Error {
  public:
    using Error::Error;
};

class CheckpointCorrupt : public Error {
  public:
    using Error::Error;
};

class SchemeMismatch : public Error {
  public:
    using Error::Error;
};

/// A block (or whole matrix) whose inverse does not exist under the
/// scale-aware determinant tolerance.
///
/// `path()` records where the failure happened as dot-separated pivot names,
/// outermost first, e.g. "A.SchurA.A". An empty path means the block handed
/// directly to the failing routine was singular.
class SingularBlock : public Error {
  public:
    explicit SingularBlock(std::string path, std::string detail = {})
        : Error(make_message(path, detail)), path_(std::move(path)), detail_(std::move(detail)) {}

    const std::string& path() const noexcept { return path_; }
    const std::string& detail() const noexcept { return detail_; }

    /// First path segment: the pivot that failed at the outermost level.
    std::string pivot() const {
        auto dot = path_.find('.');
        return dot == std::string::npos ? path_ : path_.substr(0, dot);
    }

    /// Same failure seen from one level further out.
    SingularBlock nested_under(std::string_view pivot) const {
        std::string p(pivot);
        if (!path_.empty()) {
            p += '.';
            p += path_;
        }
        return SingularBlock(std::move(p), detail_);
    }

  private:
    static std::string make_message(const std::string& path, const std::string& detail) {
        std::string msg = "singular block";
        if (!path.empty()) msg += " at " + path;
        if (!detail.empty()) msg += " (" + detail + ")";
        return msg;
    }

    std::string path_;
    std::string detail_;
};

/// Oracle-only: Gauss-Jordan found no usable pivot.
class SingularMatrix : public Error {
  public:
    using Error::Error;
};

/// invert_with_fallback exhausted every pivot formula.
class AllPivotsSingular : public Error {
  public:
    using Error::Error;
};

}  // namespace invertor
