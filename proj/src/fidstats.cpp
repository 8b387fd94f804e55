#include "cve/fidstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cve/common.hpp"

namespace cve::fid {

namespace {

constexpr double kSymmetryTol = 1e-9;
constexpr double kNegativeEigenTol = 1e-8;
constexpr double kNegativeDistanceTol = 1e-6;

void require_square(const Matrix& a, const char* what) {
    if (a.rows != a.cols) throw ShapeError(std::string(what) + ": matrix is not square");
}

void require_symmetric(const Matrix& a, const char* what) {
    require_square(a, what);
    const double scale = std::max(1.0, a.frobenius());
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) {
            if (!std::isfinite(a(i, j))) throw DomainError(std::string(what) + ": non-finite entry");
            if (std::abs(a(i, j) - a(j, i)) > kSymmetryTol * scale)
                throw DomainError(std::string(what) + ": matrix is not symmetric");
        }
}

Matrix symmetrized(const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            out(i, j) = out(j, i) = m;
        }
    return out;
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(rows, cols); ++i) t += (*this)(i, i);
    return t;
}

double Matrix::frobenius() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matrix product: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("matrix difference: shapes differ");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

FeatureSet FeatureSet::from_rows(const std::vector<std::vector<double>>& rows) {
    FeatureSet fs;
    fs.n = rows.size();
    fs.d = rows.empty() ? 0 : rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != fs.d) throw ShapeError("FeatureSet: rows differ in length");
        fs.rows.insert(fs.rows.end(), r.begin(), r.end());
    }
    return fs;
}

FeatureSet feature_set_from_cvf(const FeatureFile& file) {
    FeatureSet fs;
    if (file.layers.size() == 1 && file.layers.front().dims.size() == 2) {
        const auto& layer = file.layers.front();
        fs.n = layer.dims[0];
        fs.d = layer.dims[1];
        fs.rows.assign(layer.data.begin(), layer.data.end());
    } else {
        for (const auto& layer : file.layers) {
            if (layer.dims.size() != 1)
                throw ShapeError("feature set: layer '" + layer.name + "' must be rank 1 when stacking rows");
            if (fs.n == 0) fs.d = layer.dims[0];
            if (layer.dims[0] != fs.d) throw ShapeError("feature set: rows differ in dimension");
            fs.rows.insert(fs.rows.end(), layer.data.begin(), layer.data.end());
            ++fs.n;
        }
    }
    for (double v : fs.rows)
        if (!std::isfinite(v)) throw DomainError("feature set: non-finite entry");
    return fs;
}

FeatureFile feature_set_to_cvf(const FeatureSet& fs) {
    FeatureLayer layer{"features",
                       {static_cast<std::uint32_t>(fs.n), static_cast<std::uint32_t>(fs.d)},
                       std::vector<float>(fs.rows.begin(), fs.rows.end()),
                       std::nullopt};
    return FeatureFile{{std::move(layer)}};
}

GaussianMoments fit_moments(const FeatureSet& fs) {
    if (fs.n < 2) throw DomainError("fit_moments: need at least 2 samples, got " + std::to_string(fs.n));
    if (fs.rows.size() != fs.n * fs.d) throw ShapeError("fit_moments: row storage does not match n x d");
    GaussianMoments g{std::vector<double>(fs.d, 0.0), Matrix(fs.d, fs.d)};
    for (std::size_t i = 0; i < fs.n; ++i) {
        const auto r = fs.row(i);
        for (std::size_t j = 0; j < fs.d; ++j) g.mu[j] += r[j];
    }
    for (double& m : g.mu) m /= static_cast<double>(fs.n);

    std::vector<double> centred(fs.d);
    for (std::size_t i = 0; i < fs.n; ++i) {
        const auto r = fs.row(i);
        for (std::size_t j = 0; j < fs.d; ++j) centred[j] = r[j] - g.mu[j];
        for (std::size_t a = 0; a < fs.d; ++a) {
            const double ca = centred[a];
            for (std::size_t b = a; b < fs.d; ++b) g.sigma(a, b) += ca * centred[b];
        }
    }
    const double denom = static_cast<double>(fs.n - 1);
    for (std::size_t a = 0; a < fs.d; ++a)
        for (std::size_t b = a; b < fs.d; ++b) {
            const double v = g.sigma(a, b) / denom;
            g.sigma(a, b) = g.sigma(b, a) = v;
        }
    return g;
}

EigenDecomposition symmetric_eigen(const Matrix& input, double tol, std::size_t max_sweeps) {
    require_symmetric(input, "symmetric_eigen");
    const std::size_t n = input.rows;
    Matrix a = symmetrized(input);
    Matrix v = Matrix::identity(n);
    const double threshold = tol * a.frobenius();

    auto off_diagonal = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    EigenDecomposition out;
    while (off_diagonal() > threshold) {
        if (out.sweeps == max_sweeps) throw Error("symmetric_eigen: Jacobi sweeps did not converge");
        ++out.sweeps;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Rotation angle zeroing a(p,q), in the stable tangent form.
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
    }
    return out;
}

Matrix sqrtm_psd(const Matrix& a) {
    const auto eig = symmetric_eigen(a);
    const double scale = std::max(1.0, a.frobenius());
    const std::size_t n = a.rows;
    std::vector<double> roots(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double lambda = eig.values[j];
        if (lambda < -kNegativeEigenTol * scale)
            throw DomainError("sqrtm_psd: matrix is indefinite (eigenvalue " + std::to_string(lambda) + ")");
        roots[j] = std::sqrt(std::max(lambda, 0.0));
    }
    // S = V diag(roots) V^T, accumulated symmetrically.
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i; k < n; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += eig.vectors(i, j) * roots[j] * eig.vectors(k, j);
            s(i, k) = s(k, i) = acc;
        }
    return s;
}

double frechet_distance(const GaussianMoments& g1, const GaussianMoments& g2) {
    const std::size_t d = g1.mu.size();
    if (g2.mu.size() != d || g1.sigma.rows != d || g2.sigma.rows != d || g1.sigma.cols != d || g2.sigma.cols != d)
        throw ShapeError("frechet_distance: dimension mismatch");
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean_term += (g1.mu[i] - g2.mu[i]) * (g1.mu[i] - g2.mu[i]);

    const Matrix root1 = sqrtm_psd(g1.sigma);
    const Matrix inner = symmetrized(root1 * g2.sigma * root1);
    const Matrix cross = sqrtm_psd(inner);
    const double total = mean_term + g1.sigma.trace() + g2.sigma.trace() - 2.0 * cross.trace();
    if (total < -kNegativeDistanceTol * std::max(1.0, g1.sigma.trace() + g2.sigma.trace()))
        throw DomainError("frechet_distance: numerically indefinite result " + std::to_string(total));
    return std::max(total, 0.0);
}

double fid(const FeatureSet& real, const FeatureSet& gen) {
    if (real.d != gen.d)
        throw ShapeError("fid: feature dimensions differ (" + std::to_string(real.d) + " vs " + std::to_string(gen.d) + ")");
    return frechet_distance(fit_moments(real), fit_moments(gen));
}

}  // namespace cve::fid
