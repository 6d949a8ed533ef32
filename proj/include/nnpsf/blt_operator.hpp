#pragma once

#include <stdexcept>
#include <vector>

#include "nnpsf/types.hpp"

namespace nnpsf {

/**
 * @brief Block-lower-triangular (causal) operator over a horizon T.
 *
 * Holds the (T+1)(T+2)/2 blocks on or below the block diagonal. Blocks are addressed
 * either by (row, column) or by (row, lag) with lag = row - column; block (i, lag 0)
 * is the diagonal block.
 */
class BltOperator {
public:
    BltOperator() = default;

    BltOperator(int horizon, int rows, int cols) : horizon_(horizon), rows_(rows), cols_(cols)
    {
        if (horizon < 0 || rows < 1 || cols < 1) {
            throw DimensionError("BltOperator: invalid shape");
        }
        blocks_.assign(static_cast<std::size_t>((horizon + 1) * (horizon + 2) / 2), Matrix::Zero(rows, cols));
    }

    [[nodiscard]] int horizon() const { return horizon_; }
    [[nodiscard]] int blockRows() const { return rows_; }
    [[nodiscard]] int blockCols() const { return cols_; }

    Matrix& block(int row, int col) { return blocks_[index(row, col)]; }
    [[nodiscard]] const Matrix& block(int row, int col) const { return blocks_[index(row, col)]; }

    Matrix& lagBlock(int row, int lag) { return block(row, row - lag); }
    [[nodiscard]] const Matrix& lagBlock(int row, int lag) const { return block(row, row - lag); }

    /// Dense (T+1)p x (T+1)q matrix with zeros above the block diagonal.
    [[nodiscard]] Matrix dense() const
    {
        Matrix out = Matrix::Zero((horizon_ + 1) * rows_, (horizon_ + 1) * cols_);
        for (int i = 0; i <= horizon_; ++i) {
            for (int j = 0; j <= i; ++j) {
                out.block(i * rows_, j * cols_, rows_, cols_) = block(i, j);
            }
        }
        return out;
    }

private:
    [[nodiscard]] std::size_t index(int row, int col) const
    {
        if (row < 0 || row > horizon_ || col < 0 || col > row) {
            throw std::out_of_range("BltOperator: block (" + std::to_string(row) + ", " + std::to_string(col)
                                    + ") is outside the causal pattern");
        }
        return static_cast<std::size_t>(row * (row + 1) / 2 + col);
    }

    int horizon_ = 0;
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Matrix> blocks_;
};

} // namespace nnpsf
