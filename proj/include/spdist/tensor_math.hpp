#pragma once

// Small fixed-size linear algebra for 3x3 symmetric (positive definite)
// matrices: the diffusion tensors, the Wishart means and the proposal means.

#include <spdist/errors.hpp>

#include <array>
#include <cmath>
#include <optional>

namespace spdist {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// A vector of Euclidean norm one. Construction normalizes; a zero or
// non-finite input throws.
class UnitVector3 {
public:
    UnitVector3() : v_{1.0, 0.0, 0.0} {}
    explicit UnitVector3(Vec3 v) {
        const double n = norm(v);
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw NumericalError("cannot normalize a zero or non-finite vector");
        }
        v_ = (1.0 / n) * v;
    }
    UnitVector3(double x, double y, double z) : UnitVector3(Vec3{x, y, z}) {}

    // Keeps the exact components when v is already unit within 1e-12, so
    // vectors read back from text stay bit-identical to what was written.
    static UnitVector3 from_normalized(Vec3 v) {
        if (std::abs(norm(v) - 1.0) > 1e-12) return UnitVector3(v);
        UnitVector3 u;
        u.v_ = v;
        return u;
    }

    const Vec3& vec() const { return v_; }
    double x() const { return v_.x; }
    double y() const { return v_.y; }
    double z() const { return v_.z; }
    double operator[](int i) const { return v_[i]; }
    UnitVector3 flipped() const {
        UnitVector3 u;
        u.v_ = -v_;
        return u;
    }

    friend bool operator==(const UnitVector3&, const UnitVector3&) = default;

private:
    Vec3 v_;
};

inline double dot(const UnitVector3& a, const UnitVector3& b) { return dot(a.vec(), b.vec()); }

// General 3x3 matrix, used for rotations and products.
struct Mat3 {
    std::array<std::array<double, 3>, 3> a{};

    static constexpr Mat3 identity() {
        Mat3 m;
        m.a[0][0] = m.a[1][1] = m.a[2][2] = 1.0;
        return m;
    }
    constexpr double operator()(int i, int j) const { return a[i][j]; }
    double& operator()(int i, int j) { return a[i][j]; }

    Vec3 column(int j) const { return {a[0][j], a[1][j], a[2][j]}; }
    Mat3 transposed() const {
        Mat3 t;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.a[i][j] = a[j][i];
        return t;
    }
    friend Mat3 operator*(const Mat3& l, const Mat3& r) {
        Mat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += l.a[i][k] * r.a[k][j];
                m.a[i][j] = s;
            }
        return m;
    }
    friend Vec3 operator*(const Mat3& m, Vec3 v) {
        return {m.a[0][0] * v.x + m.a[0][1] * v.y + m.a[0][2] * v.z,
                m.a[1][0] * v.x + m.a[1][1] * v.y + m.a[1][2] * v.z,
                m.a[2][0] * v.x + m.a[2][1] * v.y + m.a[2][2] * v.z};
    }
};

// Symmetric 3x3 matrix stored as its six unique entries.
struct SymMatrix3 {
    double xx = 0.0, yy = 0.0, zz = 0.0;
    double xy = 0.0, xz = 0.0, yz = 0.0;

    static constexpr SymMatrix3 identity() { return {1.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }
    static constexpr SymMatrix3 diagonal(double a, double b, double c) { return {a, b, c, 0.0, 0.0, 0.0}; }
    static constexpr SymMatrix3 outer(Vec3 v) {
        return {v.x * v.x, v.y * v.y, v.z * v.z, v.x * v.y, v.x * v.z, v.y * v.z};
    }
    // Symmetric part of a general matrix.
    static SymMatrix3 from(const Mat3& m) {
        return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
                0.5 * (m(1, 2) + m(2, 1))};
    }

    constexpr double operator()(int i, int j) const {
        if (i == j) return i == 0 ? xx : (i == 1 ? yy : zz);
        const int s = i + j; // 1 -> xy, 2 -> xz, 3 -> yz
        return s == 1 ? xy : (s == 2 ? xz : yz);
    }
    Mat3 full() const {
        Mat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m.a[i][j] = (*this)(i, j);
        return m;
    }
    // Entries in the order (a11, a22, a33, a12, a13, a23).
    constexpr std::array<double, 6> entries() const { return {xx, yy, zz, xy, xz, yz}; }
    static constexpr SymMatrix3 from_entries(const std::array<double, 6>& e) {
        return {e[0], e[1], e[2], e[3], e[4], e[5]};
    }

    constexpr double trace() const { return xx + yy + zz; }
    constexpr double frobenius2() const {
        return xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz);
    }
    double frobenius() const { return std::sqrt(frobenius2()); }
    constexpr double determinant() const {
        return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz);
    }
    constexpr double quadratic(Vec3 g) const {
        return xx * g.x * g.x + yy * g.y * g.y + zz * g.z * g.z +
               2.0 * (xy * g.x * g.y + xz * g.x * g.z + yz * g.y * g.z);
    }
    constexpr Vec3 apply(Vec3 v) const {
        return {xx * v.x + xy * v.y + xz * v.z, xy * v.x + yy * v.y + yz * v.z,
                xz * v.x + yz * v.y + zz * v.z};
    }
    bool is_finite() const {
        for (double e : entries())
            if (!std::isfinite(e)) return false;
        return true;
    }

    SymMatrix3& operator+=(const SymMatrix3& o) {
        xx += o.xx; yy += o.yy; zz += o.zz;
        xy += o.xy; xz += o.xz; yz += o.yz;
        return *this;
    }
    friend constexpr SymMatrix3 operator+(SymMatrix3 a, const SymMatrix3& b) {
        return {a.xx + b.xx, a.yy + b.yy, a.zz + b.zz, a.xy + b.xy, a.xz + b.xz, a.yz + b.yz};
    }
    friend constexpr SymMatrix3 operator-(SymMatrix3 a, const SymMatrix3& b) {
        return {a.xx - b.xx, a.yy - b.yy, a.zz - b.zz, a.xy - b.xy, a.xz - b.xz, a.yz - b.yz};
    }
    friend constexpr SymMatrix3 operator*(double s, const SymMatrix3& a) {
        return {s * a.xx, s * a.yy, s * a.zz, s * a.xy, s * a.xz, s * a.yz};
    }
    friend constexpr bool operator==(const SymMatrix3&, const SymMatrix3&) = default;
};

// R * S * R^T
inline SymMatrix3 conjugate(const Mat3& r, const SymMatrix3& s) {
    return SymMatrix3::from(r * s.full() * r.transposed());
}

inline double max_abs_diff(const SymMatrix3& a, const SymMatrix3& b) {
    double m = 0.0;
    const auto ea = a.entries(), eb = b.entries();
    for (int i = 0; i < 6; ++i) m = std::max(m, std::abs(ea[i] - eb[i]));
    return m;
}

// Lower-triangular factor with positive diagonal.
struct Lower3 {
    double l11 = 0.0;
    double l21 = 0.0, l22 = 0.0;
    double l31 = 0.0, l32 = 0.0, l33 = 0.0;

    constexpr double operator()(int i, int j) const {
        if (j > i) return 0.0;
        switch (i * 3 + j) {
            case 0: return l11;
            case 3: return l21;
            case 4: return l22;
            case 6: return l31;
            case 7: return l32;
            default: return l33;
        }
    }
    // L * L^T
    constexpr SymMatrix3 gram() const {
        return {l11 * l11,
                l21 * l21 + l22 * l22,
                l31 * l31 + l32 * l32 + l33 * l33,
                l11 * l21,
                l11 * l31,
                l21 * l31 + l22 * l32};
    }
    double log_det_gram() const { return 2.0 * (std::log(l11) + std::log(l22) + std::log(l33)); }
    friend constexpr Lower3 operator*(const Lower3& a, const Lower3& b) {
        return {a.l11 * b.l11,
                a.l21 * b.l11 + a.l22 * b.l21,
                a.l22 * b.l22,
                a.l31 * b.l11 + a.l32 * b.l21 + a.l33 * b.l31,
                a.l32 * b.l22 + a.l33 * b.l32,
                a.l33 * b.l33};
    }
    friend constexpr Lower3 operator*(double s, const Lower3& a) {
        return {s * a.l11, s * a.l21, s * a.l22, s * a.l31, s * a.l32, s * a.l33};
    }
};

// Pivots at or below this fraction of the trace count as a failed factorization.
inline constexpr double kPivotTolerance = 1e-14;

inline std::optional<Lower3> try_cholesky(const SymMatrix3& m) {
    if (!m.is_finite()) return std::nullopt;
    const double tr = m.trace();
    if (!(tr > 0.0)) return std::nullopt;
    const double tol = kPivotTolerance * tr;

    Lower3 l;
    if (!(m.xx > tol)) return std::nullopt;
    l.l11 = std::sqrt(m.xx);
    l.l21 = m.xy / l.l11;
    l.l31 = m.xz / l.l11;
    const double p2 = m.yy - l.l21 * l.l21;
    if (!(p2 > tol)) return std::nullopt;
    l.l22 = std::sqrt(p2);
    l.l32 = (m.yz - l.l31 * l.l21) / l.l22;
    const double p3 = m.zz - l.l31 * l.l31 - l.l32 * l.l32;
    if (!(p3 > tol)) return std::nullopt;
    l.l33 = std::sqrt(p3);
    return l;
}

inline Lower3 cholesky(const SymMatrix3& m) {
    auto l = try_cholesky(m);
    if (!l) throw NotPositiveDefinite();
    return *l;
}

// Solve L * x = b by forward substitution.
constexpr Vec3 forward_solve(const Lower3& l, Vec3 b) {
    const double x = b.x / l.l11;
    const double y = (b.y - l.l21 * x) / l.l22;
    const double z = (b.z - l.l31 * x - l.l32 * y) / l.l33;
    return {x, y, z};
}

// Symmetric positive-definite matrix. Holds its Cholesky factor so that
// determinants and solves are free after construction.
class SpdMatrix3 {
public:
    SpdMatrix3() : m_(SymMatrix3::identity()), l_{1.0, 0.0, 1.0, 0.0, 0.0, 1.0} {}
    explicit SpdMatrix3(const SymMatrix3& m) : m_(m), l_(cholesky(m)) {}

    static std::optional<SpdMatrix3> try_make(const SymMatrix3& m) {
        auto l = try_cholesky(m);
        if (!l) return std::nullopt;
        return SpdMatrix3(m, *l);
    }

    const SymMatrix3& matrix() const { return m_; }
    const Lower3& cholesky_factor() const { return l_; }
    double log_det() const { return l_.log_det_gram(); }

    // tr(this^{-1} * x), computed as ||L^{-1} Lx||_F^2.
    double trace_solve(const SpdMatrix3& x) const {
        const Lower3& lx = x.l_;
        double s = 0.0;
        for (int j = 0; j < 3; ++j) {
            const Vec3 col{lx(0, j), lx(1, j), lx(2, j)};
            const Vec3 y = forward_solve(l_, col);
            s += dot(y, y);
        }
        return s;
    }

    friend bool operator==(const SpdMatrix3& a, const SpdMatrix3& b) { return a.m_ == b.m_; }

private:
    SpdMatrix3(const SymMatrix3& m, const Lower3& l) : m_(m), l_(l) {}

    SymMatrix3 m_;
    Lower3 l_;
};

// Eigenvalues in descending order; vectors[i] belongs to values[i].
struct SymmetricEigen {
    std::array<double, 3> values{};
    std::array<Vec3, 3> vectors{};
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
// 1e-13 times the matrix norm.
inline SymmetricEigen symmetric_eigen(const SymMatrix3& s) {
    Mat3 a = s.full();
    Mat3 v = Mat3::identity();
    const double scale = s.frobenius();
    const double tol = scale > 0.0 ? 1e-13 * scale : 0.0;

    auto off_norm = [&a] {
        return std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
    };

    for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                // A <- J^T A J with J the (p, q) rotation.
                for (int k = 0; k < 3; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::array<int, 3> order{0, 1, 2};
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            if (a(order[j], order[j]) > a(order[i], order[i])) std::swap(order[i], order[j]);

    SymmetricEigen e;
    for (int i = 0; i < 3; ++i) {
        e.values[i] = a(order[i], order[i]);
        e.vectors[i] = v.column(order[i]);
    }
    return e;
}

// Flip v so that its entry of largest magnitude is positive.
inline Vec3 canonical_sign(Vec3 v) {
    int imax = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    return v[imax] < 0.0 ? -v : v;
}

struct PrincipalDirection {
    UnitVector3 direction;
    double eigenvalue = 0.0;
    // The top two eigenvalues are too close for the direction to mean anything.
    bool degenerate = false;
};

inline PrincipalDirection principal_eigenvector(const SymMatrix3& m) {
    const SymmetricEigen e = symmetric_eigen(m);
    PrincipalDirection p;
    p.direction = UnitVector3(canonical_sign(e.vectors[0]));
    p.eigenvalue = e.values[0];
    p.degenerate = e.values[0] - e.values[1] < 1e-9 * std::abs(e.values[0]);
    return p;
}

inline PrincipalDirection principal_eigenvector(const SpdMatrix3& m) {
    return principal_eigenvector(m.matrix());
}

// Rotation from a (not necessarily normalized) quaternion.
inline Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n; x /= n; y /= n; z /= n;
    Mat3 r;
    r.a = {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
            {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
    return r;
}

} // namespace spdist
