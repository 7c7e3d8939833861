#include "rdistill/matrix.hpp"

#include "rdistill/errors.hpp"

namespace rdistill {

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  }
  if (values.size() != cols_) {
    throw InvalidInput("Matrix::append_row: row width mismatch");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

}  // namespace rdistill
