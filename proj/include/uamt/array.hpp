#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "uamt/common.hpp"

namespace uamt {

// Dense row-major n-d array. The last axis is fastest.
template <typename T>
struct Array {
    std::vector<int64_t> shape;
    std::vector<T> v;

    Array() = default;

    explicit Array(std::vector<int64_t> s) : shape(std::move(s)) {
        v.assign(size_t(count(shape)), T(0));
    }

    Array(std::initializer_list<int64_t> s) : Array(std::vector<int64_t>(s)) {}

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw ShapeError("negative array dimension");
            n *= d;
        }
        return n;
    }

    int64_t size() const { return int64_t(v.size()); }
    int rank() const { return int(shape.size()); }
    int64_t dim(int i) const { return shape[size_t(i)]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator[](int64_t i) { return v[size_t(i)]; }
    const T& operator[](int64_t i) const { return v[size_t(i)]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    static std::string shape_str(const std::vector<int64_t>& s) {
        std::string out = "(";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
    std::string shape_str() const { return shape_str(shape); }
};

}  // namespace uamt
