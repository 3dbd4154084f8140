#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tnz {

// Row-major dense matrix.
template <typename T>
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> values;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

    std::span<T> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const T> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    T& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    bool operator==(const DenseMatrix&) const = default;
};

} // namespace tnz
