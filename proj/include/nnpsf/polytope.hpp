#pragma once

#include <algorithm>
#include <string>

#include "nnpsf/types.hpp"

namespace nnpsf {

/// Polyhedron {x | F x <= b}; its rows are softened with slacks inside the filter program.
struct SoftPolytope {
    Matrix F;
    Vector b;

    SoftPolytope() = default;
    SoftPolytope(Matrix f, Vector rhs) : F(std::move(f)), b(std::move(rhs))
    {
        if (F.rows() < 1 || F.rows() != b.size()) {
            throw DimensionError("SoftPolytope: need m >= 1 rows with matching offsets");
        }
        if (!F.allFinite() || !b.allFinite()) {
            throw FormatError("SoftPolytope: non-finite row");
        }
    }

    [[nodiscard]] int rows() const { return static_cast<int>(F.rows()); }
    [[nodiscard]] int dim() const { return static_cast<int>(F.cols()); }

    [[nodiscard]] bool contains(const Vector& x, double tol = 1e-9) const
    {
        return ((F * x - b).array() <= tol).all();
    }

    /// Largest row violation max_j (a_j' x - b_j), clamped at 0.
    [[nodiscard]] double violation(const Vector& x) const { return std::max(0.0, (F * x - b).maxCoeff()); }

    /// Box {lo <= x <= hi} as rows e_i' x <= hi_i followed by -e_i' x <= -lo_i.
    static SoftPolytope box(const Vector& lo, const Vector& hi)
    {
        if (lo.size() != hi.size()) {
            throw DimensionError("SoftPolytope::box: bound lengths differ");
        }
        const auto n = lo.size();
        Matrix f(2 * n, n);
        f << Matrix::Identity(n, n), -Matrix::Identity(n, n);
        Vector rhs(2 * n);
        rhs << hi, -lo;
        return {std::move(f), std::move(rhs)};
    }

    static SoftPolytope symmetricBox(const Vector& halfWidth) { return box(-halfWidth, halfWidth); }

    /// l-inf ball of the given radius around center.
    static SoftPolytope ball(const Vector& center, double radius)
    {
        const Vector r = Vector::Constant(center.size(), radius);
        return box(center - r, center + r);
    }
};

} // namespace nnpsf
