#pragma once

#include "selfstorm/core.hpp"

namespace selfstorm {

/// Linear map between image shapes, with its transpose.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual ImageD forward(const ImageD& x) const = 0;
    virtual ImageD adjoint(const ImageD& y) const = 0;

    virtual Eigen::Index input_rows() const = 0;
    virtual Eigen::Index input_cols() const = 0;
    virtual Eigen::Index output_rows() const = 0;
    virtual Eigen::Index output_cols() const = 0;

    /// Dense matrix acting on column-major vectorised images. Test-sized problems only.
    Eigen::MatrixXd materialize() const;
};

/// An explicit matrix, acting on column-major vectorised images.
class DenseOperator final : public LinearOperator {
public:
    DenseOperator(Eigen::MatrixXd matrix, Eigen::Index in_rows, Eigen::Index in_cols, Eigen::Index out_rows,
                  Eigen::Index out_cols);

    /// Vector-to-vector form: inputs are n x 1 and outputs m x 1.
    explicit DenseOperator(Eigen::MatrixXd matrix);

    ImageD forward(const ImageD& x) const override;
    ImageD adjoint(const ImageD& y) const override;

    Eigen::Index input_rows() const override { return in_rows_; }
    Eigen::Index input_cols() const override { return in_cols_; }
    Eigen::Index output_rows() const override { return out_rows_; }
    Eigen::Index output_cols() const override { return out_cols_; }

    const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }

private:
    Eigen::MatrixXd matrix_;
    Eigen::Index in_rows_, in_cols_, out_rows_, out_cols_;
};

}  // namespace selfstorm
