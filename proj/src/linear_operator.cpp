#include "selfstorm/linear_operator.hpp"

#include <stdexcept>

namespace selfstorm {

Eigen::MatrixXd LinearOperator::materialize() const {
    const Eigen::Index n = input_rows() * input_cols();
    const Eigen::Index m = output_rows() * output_cols();
    Eigen::MatrixXd a(m, n);
    ImageD unit = ImageD::Zero(input_rows(), input_cols());
    for (Eigen::Index j = 0; j < n; ++j) {
        unit.data()[j] = 1.0;
        const ImageD col = forward(unit);
        a.col(j) = Eigen::Map<const Eigen::VectorXd>(col.data(), m);
        unit.data()[j] = 0.0;
    }
    return a;
}

DenseOperator::DenseOperator(Eigen::MatrixXd matrix, Eigen::Index in_rows, Eigen::Index in_cols,
                             Eigen::Index out_rows, Eigen::Index out_cols)
    : matrix_(std::move(matrix)), in_rows_(in_rows), in_cols_(in_cols), out_rows_(out_rows), out_cols_(out_cols) {
    if (matrix_.rows() != out_rows * out_cols || matrix_.cols() != in_rows * in_cols)
        throw std::invalid_argument("dense operator: matrix shape does not match image shapes");
}

DenseOperator::DenseOperator(Eigen::MatrixXd matrix)
    : DenseOperator(matrix, matrix.cols(), 1, matrix.rows(), 1) {}

ImageD DenseOperator::forward(const ImageD& x) const {
    if (x.rows() != in_rows_ || x.cols() != in_cols_)
        throw std::invalid_argument("dense operator: input shape mismatch");
    const Eigen::VectorXd v = matrix_ * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    return Eigen::Map<const ImageD>(v.data(), out_rows_, out_cols_);
}

ImageD DenseOperator::adjoint(const ImageD& y) const {
    if (y.rows() != out_rows_ || y.cols() != out_cols_)
        throw std::invalid_argument("dense operator: adjoint input shape mismatch");
    const Eigen::VectorXd v = matrix_.transpose() * Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
    return Eigen::Map<const ImageD>(v.data(), in_rows_, in_cols_);
}

}  // namespace selfstorm
