#pragma once

// Independent reference values for the transfer weights, written from the closed-form
// coefficient tables and from brute-force sampling. Indices here are 1-based as in the
// tables; W[h][j] is stored with an unused row and column 0.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using Table = std::vector<std::vector<double>>;

inline Table zeros(int N) { return Table(N + 1, std::vector<double>(N + 1, 0.0)); }

inline int ceil_int(double x) { return static_cast<int>(std::ceil(x - 1e-12)); }
inline double kron(int a, int b) { return a == b ? 1.0 : 0.0; }

// δ acceleration weights for generic r. c = ceil(r), cp = ceil(r + 1/2), cm = ceil(r - 1/2).
inline Table delta_closed_form(int N, double r) {
    Table W = zeros(N);
    const int c = ceil_int(r), cp = ceil_int(r + 0.5), cm = ceil_int(r - 0.5);
    // j = cp: the cell containing v = delta_v
    W[1][cp] += 2.0 * std::min(0.5, cp - 0.5 - r);
    if (cm >= 1 && 2 <= N) W[2][cp] += kron(c, cm) * (cm - r);
    for (int j = cp + 1; j <= N - 1; ++j) {
        W[j - c][j] += (1.0 + kron(c, cp) * kron(j, cp + 1)) * (1.0 + r - c);
        W[j - c + 1][j] += (c - r);
    }
    // j = N
    if (N - cp >= 1) W[N - cp][N] += kron(c, cp) * (r - cm);
    W[N - cm][N] += kron(c, cp) * (cp - 0.5 - r);
    W[N - cm][N] += 0.5 * kron(c, cm) + (r - cm + 0.5);
    for (int h = N - cp + 2; h <= N; ++h) W[h][N] += 1.0;
    return W;
}

// χ acceleration weights for integer r (valid when the groups do not overlap, T >= 3).
inline Table chi_closed_form(int N, int r) {
    Table W = zeros(N);
    const double L = std::log(2.0 * r / (2.0 * r - 1.0));
    auto lg = [N](int h) { return std::log((N - h + 0.5) / (N - h - 0.5)); };
    W[1][1] += 1.0 / (4 * r);
    for (int j = 2; j <= r; ++j) {
        for (int h = 1; h < j; ++h) W[h][j] += 1.0 / r;
        W[j][j] += 1.0 / (2 * r);
    }
    {
        const int j = r + 1;
        W[1][j] += 3.0 / (4 * r);
        for (int h = 2; h < j; ++h) W[h][j] += 1.0 / r;
        W[j][j] += 1.0 / (2 * r);
    }
    for (int j = r + 2; j <= N - r - 1; ++j) {
        W[j - r][j] += 1.0 / (2 * r);
        for (int h = j - r + 1; h < j; ++h) W[h][j] += 1.0 / r;
        W[j][j] += 1.0 / (2 * r);
    }
    {
        const int j = N - r;
        W[j - r][j] += 1.0 / (2 * r);
        for (int h = j - r + 1; h < j; ++h) W[h][j] += 1.0 / r;
        W[j][j] += 3.0 / (8 * r) + 0.5 + (0.5 - r) * L;
    }
    for (int j = N - r + 1; j <= N - 1; ++j) {
        W[j - r][j] += 1.0 / (2 * r);
        for (int h = j - r + 1; h <= N - r - 1; ++h) W[h][j] += 1.0 / r;
        W[N - r][j] += 1.0 / (2 * r) + L;
        for (int h = N - r + 1; h < j; ++h) W[h][j] += lg(h);
        W[j][j] += 1.0 + (j + 0.5 - N) * lg(j);
    }
    W[N - r][N] += 1.0 / (8 * r) + 0.5 * L;
    for (int h = N - r + 1; h < N; ++h) W[h][N] += 0.5 * lg(h);
    W[N][N] += 1.0;
    return W;
}

// Cell of speed x (in units of dv) on an N-cell grid, 1-based.
inline int cell_of(double x, int N) {
    if (x < 0.5) return 1;
    if (x >= N - 1.5) return N;
    return static_cast<int>(std::floor(x + 0.5)) + 1;
}

// Midpoint sampling of the candidate speed inside each cell.
inline Table delta_sampled(int N, double r, int M) {
    Table W = zeros(N);
    const double V = N - 1;
    for (int h = 1; h <= N; ++h) {
        const double lo = h == 1 ? 0.0 : h - 1.5, hi = h == N ? V : h - 0.5;
        for (int s = 0; s < M; ++s) {
            const double x = lo + (s + 0.5) * (hi - lo) / M;
            W[h][cell_of(std::min(x + r, V), N)] += 1.0 / M;
        }
    }
    return W;
}

inline Table chi_sampled(int N, double r, int M) {
    Table W = zeros(N);
    const double V = N - 1;
    for (int h = 1; h <= N; ++h) {
        const double lo = h == 1 ? 0.0 : h - 1.5, hi = h == N ? V : h - 0.5;
        for (int s = 0; s < M; ++s) {
            const double x = lo + (s + 0.5) * (hi - lo) / M;
            const double top = std::min(x + r, V);
            for (int j = 1; j <= N; ++j) {
                const double clo = j == 1 ? 0.0 : j - 1.5, chi = j == N ? V : j - 0.5;
                const double ov = std::min(top, chi) - std::max(x, clo);
                if (ov > 0.0) W[h][j] += ov / (top - x) / M;
            }
        }
    }
    return W;
}

// Stable class masses from the quadratic formula taken at face value.
inline std::vector<double> equilibrium_naive(double rho, double P, int T) {
    std::vector<double> m(T + 1, 0.0);
    if (P >= 0.5) {
        m[T] = rho;
        return m;
    }
    m[0] = rho * (1 - 2 * P) / (1 - P);
    double s = m[0];
    for (int l = 1; l < T; ++l) {
        const double a = -(1 - P), b = (1 - 2 * P) * rho - 2 * (1 - P) * s, c = P * rho * m[l - 1];
        const double r1 = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
        const double r2 = (-b - std::sqrt(b * b - 4 * a * c)) / (2 * a);
        m[l] = std::max(r1, r2);
        s += m[l];
    }
    m[T] = rho - s;
    return m;
}

}  // namespace oracle
