#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "hairmatte/errors.hpp"
#include "hairmatte/rng.hpp"

namespace hairmatte {

// NCHW shape. Dense row-major layout with w fastest.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape s) : shape_(check(s)), data_(s.numel(), T(0)) {}

    TensorT(Shape s, std::vector<T> data) : shape_(check(s)), data_(std::move(data)) {
        require(data_.size() == shape_.numel(), ErrorKind::shape,
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                    shape_.str());
    }

    static TensorT zeros(int n, int c, int h, int w) { return TensorT(Shape{n, c, h, w}); }

    static TensorT full(int n, int c, int h, int w, T value) {
        TensorT t(Shape{n, c, h, w});
        for (auto& v : t.data_) v = value;
        return t;
    }

    static TensorT scalar(T value) { return full(1, 1, 1, 1, value); }

    // 2-D convenience for single-channel test images: rows of equal length.
    static TensorT from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        const int h = static_cast<int>(rows.size());
        const int w = h > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        TensorT t(Shape{1, 1, h, w});
        int y = 0;
        for (const auto& row : rows) {
            require(static_cast<int>(row.size()) == w, ErrorKind::shape, "ragged row list");
            int x = 0;
            for (T v : row) t.at(0, 0, y, x++) = v;
            ++y;
        }
        return t;
    }

    static TensorT random_uniform(Shape s, Rng& rng, T lo, T hi) {
        TensorT t(s);
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    T at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // Pointer to the start of one (n, c) plane.
    T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void check_finite(const char* context) const {
        if (!all_finite()) fail(ErrorKind::numeric, std::string(context) + ": non-finite values");
    }

    void fill(T value) {
        for (auto& v : data_) v = value;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const TensorT& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    static Shape check(Shape s) {
        require(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, ErrorKind::shape,
                "negative tensor dimension in " + s.str());
        return s;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                   b.shape().str());
    }
}

// The constructor already guards length; this re-checks invariants after
// external mutation (used by validator passes).
template <typename T>
bool tensor_values_binary(const TensorT<T>& t) {
    for (T v : t.vec()) {
        if (v != T(0) && v != T(1)) return false;
    }
    return true;
}

}  // namespace hairmatte
