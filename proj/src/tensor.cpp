#include "fedmtl/tensor.hpp"

#include <cmath>

#include "fedmtl/errors.hpp"

namespace fedmtl {

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Tensor2 t(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != t.cols_)
            throw ShapeError("from_rows: ragged row " + std::to_string(r));
        std::size_t c = 0;
        for (double v : row) t(r, c++) = v;
        ++r;
    }
    return t;
}

bool Tensor2::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor2 Tensor2::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_)
        throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") of " + std::to_string(rows_) + " rows");
    Tensor2 out(end - begin, cols_);
    for (std::size_t r = begin; r < end; ++r) {
        const double* src = row_ptr(r);
        double* dst = out.row_ptr(r - begin);
        for (std::size_t c = 0; c < cols_; ++c) dst[c] = src[c];
    }
    return out;
}

Tensor2 Tensor2::column(std::size_t c) const {
    if (c >= cols_)
        throw ShapeError("column: index " + std::to_string(c) + " out of " + std::to_string(cols_));
    Tensor2 out(rows_, 1);
    for (std::size_t r = 0; r < rows_; ++r) out(r, 0) = (*this)(r, c);
    return out;
}

} // namespace fedmtl
