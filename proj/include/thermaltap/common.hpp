#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermaltap {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Missing observations (dropped frames, under-covered cells, undefined
// deltas) are carried as quiet NaN until imputation at classify time.
inline double missing() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define THERMALTAP_DEFINE_ERROR(NAME)                                   \
    class NAME : public Error {                                         \
    public:                                                             \
        explicit NAME(const std::string& msg) : Error(msg) {}           \
    }

THERMALTAP_DEFINE_ERROR(ParseError);
THERMALTAP_DEFINE_ERROR(ValueError);
THERMALTAP_DEFINE_ERROR(EmptySessionError);
THERMALTAP_DEFINE_ERROR(OrderError);
THERMALTAP_DEFINE_ERROR(PlanError);
THERMALTAP_DEFINE_ERROR(MetricsError);
THERMALTAP_DEFINE_ERROR(ShapeError);
THERMALTAP_DEFINE_ERROR(BaselineMissingError);
THERMALTAP_DEFINE_ERROR(PreprocessError);
THERMALTAP_DEFINE_ERROR(GroupError);
THERMALTAP_DEFINE_ERROR(SessionUnscorableError);
THERMALTAP_DEFINE_ERROR(ConfigError);

#undef THERMALTAP_DEFINE_ERROR

/// Dense row-major grid. Used for temperature matrices, masks and the
/// per-cell feature grids.
template <typename T>
class GridOf {
public:
    GridOf() = default;
    GridOf(int height, int width, T fill = T{})
        : height_(height), width_(width),
          data_(static_cast<size_t>(height) * static_cast<size_t>(width), fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int r, int c) { return data_[static_cast<size_t>(r) * width_ + c]; }
    const T& at(int r, int c) const { return data_[static_cast<size_t>(r) * width_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    bool same_shape(const GridOf& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool operator==(const GridOf& other) const {
        return height_ == other.height_ && width_ == other.width_ && data_ == other.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using Matrix = GridOf<double>;
using BitGrid = GridOf<uint8_t>;

}  // namespace thermaltap
