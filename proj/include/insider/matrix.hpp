#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace insider {

// Dense row-major matrix of doubles. Value semantics throughout.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_column(std::size_t c, const std::vector<double>& v) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
  }

  std::vector<double> row(std::size_t r) const {
    return std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                               data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace insider
