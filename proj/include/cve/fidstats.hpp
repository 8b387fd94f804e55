#pragma once

#include <cstddef>
#include <vector>

#include "cve/features.hpp"

namespace cve::fid {

/// Dense square or rectangular matrix, row-major.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    static Matrix identity(std::size_t n);
    static Matrix diagonal(const std::vector<double>& d);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Matrix transpose() const;
    double trace() const;
    double frobenius() const;
    bool operator==(const Matrix&) const = default;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

/// n x d feature rows.
struct FeatureSet {
    std::size_t n = 0, d = 0;
    std::vector<double> rows;

    static FeatureSet from_rows(const std::vector<std::vector<double>>& rows);
    std::span<const double> row(std::size_t i) const { return {rows.data() + i * d, d}; }
};

/// A single rank-2 (n, d) layer, or a sequence of rank-1 layers of equal
/// length (one row each).
FeatureSet feature_set_from_cvf(const FeatureFile& file);
FeatureFile feature_set_to_cvf(const FeatureSet& fs);

struct GaussianMoments {
    std::vector<double> mu;
    Matrix sigma;
};

/// Column means and the unbiased (n - 1) sample covariance, symmetrized.
GaussianMoments fit_moments(const FeatureSet& fs);

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column j pairs with values[j]
    std::size_t sweeps = 0;
};

/// Cyclic Jacobi for symmetric matrices. Stops once the off-diagonal
/// Frobenius norm is <= tol * ||A||_F.
EigenDecomposition symmetric_eigen(const Matrix& a, double tol = 1e-10, std::size_t max_sweeps = 100);

/// Principal square root of a symmetric PSD matrix via eigen-decomposition;
/// eigenvalues in [-1e-8, 0) are clamped to zero.
Matrix sqrtm_psd(const Matrix& a);

double frechet_distance(const GaussianMoments& g1, const GaussianMoments& g2);

double fid(const FeatureSet& real, const FeatureSet& gen);

}  // namespace cve::fid
