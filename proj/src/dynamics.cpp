#include "ktraffic/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "format.hpp"
#include "ktraffic/errors.hpp"

namespace ktraffic {

void collision_rhs(std::span<const double> f, const InteractionTensor& tensor, double eta, std::span<double> out) {
    const std::size_t n = tensor.size();
    if (f.size() != n || out.size() != n)
        throw DomainError("state has " + std::to_string(f.size()) + " cells, tensor has " + std::to_string(n));
    const double rho = std::accumulate(f.begin(), f.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& m = tensor.matrices[j];
        double quad = 0.0;
        for (const auto& e : m.entries) quad += f[e.row] * e.value * f[e.col];
        double lin = 0.0;
        for (const auto& rw : m.rows) lin += rw.value * f[rw.row];
        out[j] = eta * (quad + rho * lin - f[j] * rho);
    }
}

CellMassVector collision_rhs(std::span<const double> f, const InteractionTensor& tensor, double eta) {
    CellMassVector g(f.size());
    collision_rhs(f, tensor, eta, g);
    return g;
}

namespace {

double inf_norm(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

double total(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0); }

void check_initial(const CellMassVector& f0, const InteractionTensor& tensor, double eta) {
    if (f0.size() != tensor.size()) throw DomainError("initial state does not match the tensor size");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    for (double v : f0)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("initial masses must be finite and non-negative");
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// Advances the state one accepted step at a time and keeps the diagnostics every caller needs.
class Propagator {
public:
    Propagator(const CellMassVector& f0, const InteractionTensor& tensor, double eta, const IntegratorControls& c)
        : tensor_(tensor), eta_(eta), c_(c), y_(f0), dydt_(f0.size()), n_(f0.size()) {
        rho_ = total(y_);
        collision_rhs(y_, tensor_, eta_, dydt_);
        for (auto* v : {&k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) v->assign(n_, 0.0);
        const double scale = eta_ * std::max(rho_, std::numeric_limits<double>::min());
        h_max_ = 0.1 / scale;
        if (c_.stepper == Stepper::Rk4) {
            if (c_.step > 0.0 && c_.step > h_max_ * (1.0 + 1e-12))
                throw ConfigError("RK4 step exceeds the stability bound 0.1/(eta rho)");
            h_ = c_.step > 0.0 ? c_.step : h_max_;
        } else {
            h_ = 0.1 * h_max_;
        }
    }

    double t() const { return t_; }
    const CellMassVector& state() const { return y_; }
    const CellMassVector& derivative() const { return dydt_; }
    double residual() const { return inf_norm(dydt_); }
    double rho() const { return rho_; }

    double min_component = 0.0;
    double max_drift = 0.0;
    std::size_t clamped = 0;
    std::size_t steps = 0;

    // One accepted step that does not pass t_stop; returns its length.
    double advance(double t_stop) {
        if (rho_ == 0.0) {  // nothing moves on an empty road
            const double dt = t_stop - t_;
            t_ = t_stop;
            ++steps;
            return dt;
        }
        const double remaining = t_stop - t_;
        const double dt = c_.stepper == Stepper::Rk4 ? rk4(t_stop) : dopri(t_stop);
        if (dt == remaining) t_ = t_stop;  // land exactly on requested sample times
        return dt;
    }

private:
    double rk4(double t_stop) {
        double dt = std::min(h_, t_stop - t_);
        if (t_stop - t_ - dt < 1e-9 * h_) dt = t_stop - t_;
        auto stage = [&](const CellMassVector& k, double a, CellMassVector& out) {
            for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y_[i] + a * dt * k[i];
            collision_rhs(tmp_, tensor_, eta_, out);
        };
        stage(dydt_, 0.5, k2_);
        stage(k2_, 0.5, k3_);
        stage(k3_, 1.0, k4_);
        for (std::size_t i = 0; i < n_; ++i)
            ynew_[i] = y_[i] + dt / 6.0 * (dydt_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
        if (scan_negative(ynew_) < -c_.negative_tol) {
            std::ostringstream os;
            os << "negative mass " << scan_negative(ynew_) << " at t = " << t_ + dt;
            throw NumericalError(os.str());
        }
        commit(dt);
        return dt;
    }

    double dopri(double t_stop) {
        for (;;) {
            double dt = std::min(h_, t_stop - t_);
            if (dt < c_.min_step && dt < t_stop - t_) throw NumericalError("step size underflow");
            auto stage = [&](CellMassVector& out, std::initializer_list<std::pair<double, const CellMassVector*>> ks) {
                for (std::size_t i = 0; i < n_; ++i) {
                    double s = y_[i];
                    for (const auto& [a, k] : ks) s += dt * a * (*k)[i];
                    tmp_[i] = s;
                }
                collision_rhs(tmp_, tensor_, eta_, out);
            };
            stage(k2_, {{a21, &dydt_}});
            stage(k3_, {{a31, &dydt_}, {a32, &k2_}});
            stage(k4_, {{a41, &dydt_}, {a42, &k2_}, {a43, &k3_}});
            stage(k5_, {{a51, &dydt_}, {a52, &k2_}, {a53, &k3_}, {a54, &k4_}});
            stage(k6_, {{a61, &dydt_}, {a62, &k2_}, {a63, &k3_}, {a64, &k4_}, {a65, &k5_}});
            for (std::size_t i = 0; i < n_; ++i)
                ynew_[i] = y_[i] + dt * (b1 * dydt_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
            collision_rhs(ynew_, tensor_, eta_, k7_);
            double err = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                const double e = dt * (e1 * dydt_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] +
                                       e7 * k7_[i]);
                const double sc = c_.atol + c_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
                err = std::max(err, std::abs(e) / sc);
            }
            const bool negative = scan_negative(ynew_) < -c_.negative_tol;
            if (err <= 1.0 && !negative) {
                const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                commit(dt);
                // A step clipped to t_stop says nothing about the step the error allows.
                h_ = dt < h_ ? std::max(h_, dt * grow) : dt * grow;
                return dt;
            }
            h_ = negative ? 0.5 * dt : dt * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        }
    }

    double scan_negative(const CellMassVector& y) const {
        double m = 0.0;
        for (double v : y) m = std::min(m, v);
        return m;
    }

    void commit(double dt) {
        bool any = false;
        for (double& v : ynew_)
            if (v < 0.0) {
                min_component = std::min(min_component, v);
                v = 0.0;
                ++clamped;
                any = true;
            }
        std::swap(y_, ynew_);
        t_ += dt;
        ++steps;
        if (c_.stepper == Stepper::DormandPrince && !any)
            std::swap(dydt_, k7_);
        else
            collision_rhs(y_, tensor_, eta_, dydt_);
        max_drift = std::max(max_drift, std::abs(total(y_) - rho_));
    }

    const InteractionTensor& tensor_;
    double eta_;
    IntegratorControls c_;
    CellMassVector y_, dydt_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
    std::size_t n_;
    double rho_ = 0.0;
    double t_ = 0.0;
    double h_ = 0.0;
    double h_max_ = 0.0;
};

}  // namespace

Trajectory integrate(const CellMassVector& f0, const InteractionTensor& tensor, double eta, double t_end,
                     const IntegratorControls& controls) {
    check_initial(f0, tensor, eta);
    if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
    Propagator prop(f0, tensor, eta, controls);
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(f0);
    const bool geometric = controls.geometric_ratio > 1.0;
    const bool arithmetic = !geometric && controls.sample_interval > 0.0;
    // Steps are clipped so that every sample time is hit exactly. Arithmetic samples are
    // k * interval; geometric ones start at the first step and grow by the ratio.
    std::size_t k = 1;
    double next = arithmetic ? controls.sample_interval : 0.0;
    while (prop.t() < t_end) {
        prop.advance(next > 0.0 ? std::min(next, t_end) : t_end);
        const double t = prop.t();
        bool store = true;
        if (arithmetic || geometric) {
            store = t >= t_end || t >= next;
            if (geometric && next == 0.0) next = t;
            if (store) next = arithmetic ? static_cast<double>(++k) * controls.sample_interval
                                         : next * controls.geometric_ratio;
        }
        if (store) {
            traj.times.push_back(t);
            traj.states.push_back(prop.state());
        }
    }
    traj.terminal_residual = prop.residual();
    traj.max_mass_drift = prop.max_drift;
    traj.min_component = prop.min_component;
    traj.clamped = prop.clamped;
    traj.steps = prop.steps;
    return traj;
}

SteadyState find_steady_state(const CellMassVector& f0, const InteractionTensor& tensor, double eta,
                              const SteadyStateControls& controls) {
    check_initial(f0, tensor, eta);
    if (!(controls.residual_tol > 0.0) || !(controls.change_tol > 0.0) || !(controls.t_max > 0.0))
        throw ConfigError("steady-state tolerances and t_max must be positive");
    Propagator prop(f0, tensor, eta, controls.integrator);
    auto finish = [&] {
        SteadyState s;
        s.state = prop.state();
        s.time = prop.t();
        s.residual = prop.residual();
        s.max_mass_drift = prop.max_drift;
        s.min_component = prop.min_component;
        s.clamped = prop.clamped;
        s.steps = prop.steps;
        return s;
    };
    const double floor = std::numeric_limits<double>::min();
    double change = prop.residual() / std::max(inf_norm(prop.state()), floor);
    CellMassVector prev;
    for (;;) {
        if (prop.residual() <= controls.residual_tol && change <= controls.change_tol) return finish();
        if (prop.t() >= controls.t_max) {
            std::ostringstream os;
            os << "no steady state by t = " << prop.t() << " (residual " << prop.residual() << ")";
            throw ConvergenceError(os.str(), prop.t(), prop.residual(), prop.state());
        }
        prev = prop.state();
        const double dt = prop.advance(controls.t_max);
        double diff = 0.0;
        for (std::size_t i = 0; i < prev.size(); ++i) diff = std::max(diff, std::abs(prop.state()[i] - prev[i]));
        change = dt > 0.0 ? diff / (dt * std::max(inf_norm(prev), floor)) : change;
    }
}

std::vector<double> distance_to_equilibrium(const Trajectory& traj, const CellMassVector& f_inf) {
    std::vector<double> e;
    e.reserve(traj.states.size());
    for (const auto& s : traj.states) {
        if (s.size() != f_inf.size()) throw DomainError("equilibrium size does not match the trajectory");
        double sq = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) sq += (s[i] - f_inf[i]) * (s[i] - f_inf[i]);
        e.push_back(std::sqrt(sq));
    }
    return e;
}

ConvergenceFit fit_convergence_rate(std::span<const double> times, std::span<const double> e, double t_begin,
                                    double t_end) {
    if (times.size() != e.size()) throw DomainError("times and distances differ in length");
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    std::size_t n = 0;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_begin || times[i] > t_end) continue;
        if (!(e[i] > 0.0) || !std::isfinite(e[i])) throw NumericalError("fit window contains non-positive distances");
        const double y = std::log(e[i]);
        pts.emplace_back(times[i], y);
        st += times[i];
        sy += y;
        stt += times[i] * times[i];
        sty += times[i] * y;
        ++n;
    }
    if (n < 3) throw NumericalError("fit window holds fewer than three samples");
    const double tm = st / n;
    const double ym = sy / n;
    const double var = stt / n - tm * tm;
    if (!(var > 0.0)) throw NumericalError("fit window has no time spread");
    // Centered sums keep the slope accurate on long windows.
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [t, y] : pts) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    const double slope = sxy / sxx;
    const double icpt = ym - slope * tm;
    double ss = 0.0;
    for (const auto& [t, y] : pts) ss += (y - icpt - slope * t) * (y - icpt - slope * t);
    ConvergenceFit fit;
    fit.rate = -slope;
    fit.prefactor = std::exp(icpt);
    fit.t_begin = pts.front().first;
    fit.t_end = pts.back().first;
    fit.rms_residual = std::sqrt(ss / n);
    fit.points = n;
    return fit;
}

std::pair<double, double> decay_window(std::span<const double> times, std::span<const double> e, double upper,
                                       double lower) {
    if (times.empty() || times.size() != e.size()) throw DomainError("empty or mismatched distance series");
    const double e0 = e[0];
    if (!(e0 > 0.0)) throw NumericalError("initial distance is zero");
    std::size_t i0 = times.size(), i1 = times.size();
    for (std::size_t i = 0; i < times.size(); ++i)
        if (e[i] <= upper * e0) {
            i0 = i;
            break;
        }
    for (std::size_t i = times.size(); i-- > 0;)
        if (e[i] >= lower * e0) {
            i1 = i;
            break;
        }
    if (i0 == times.size() || i1 == times.size() || i1 <= i0)
        throw NumericalError("distance never traverses the requested decay window");
    return {times[i0], times[i1]};
}

PiecewiseLinearCdf::PiecewiseLinearCdf(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() != values_.size() || knots_.size() < 2) throw DomainError("malformed CDF");
}

double PiecewiseLinearCdf::operator()(double v) const {
    if (v <= knots_.front()) return values_.front();
    if (v >= knots_.back()) return values_.back();
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), v);
    const auto i = static_cast<std::size_t>(it - knots_.begin());
    const double x0 = knots_[i - 1], x1 = knots_[i];
    return values_[i - 1] + (values_[i] - values_[i - 1]) * (v - x0) / (x1 - x0);
}

PiecewiseLinearCdf cumulative_distribution(const CellMassVector& f, const VelocityGrid& grid) {
    if (f.size() != grid.size()) throw DomainError("state does not match the grid");
    std::vector<double> knots(f.size() + 1), values(f.size() + 1, 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) {
        knots[j] = grid.lower(j);
        values[j + 1] = values[j] + f[j];
    }
    knots.back() = grid.v_max();
    return {std::move(knots), std::move(values)};
}

double Staircase::operator()(double v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < locations.size(); ++i)
        if (locations[i] <= v) s += masses[i];
    return s;
}

double Staircase::left_limit(double v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < locations.size(); ++i)
        if (locations[i] < v) s += masses[i];
    return s;
}

double sup_distance(const PiecewiseLinearCdf& F, const Staircase& G) {
    std::vector<double> pts = F.knots();
    pts.insert(pts.end(), G.locations.begin(), G.locations.end());
    double d = 0.0;
    for (double p : pts) {
        const double fp = F(p);
        d = std::max({d, std::abs(fp - G(p)), std::abs(fp - G.left_limit(p))});
    }
    return d;
}

double levy_distance(const PiecewiseLinearCdf& F, const Staircase& G) {
    const double g_total = std::accumulate(G.masses.begin(), G.masses.end(), 0.0);
    const double f_total = F.values().back();
    auto fits = [&](double eps) {
        if (f_total > g_total + eps || g_total - eps > f_total) return false;
        for (double a : G.locations) {
            if (F(a - eps) > G.left_limit(a) + eps) return false;
            if (G(a) - eps > F(a + eps)) return false;
        }
        return true;
    };
    double lo = 0.0;
    double hi = std::max(F.knots().back(), std::max(f_total, g_total)) + 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (fits(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const VelocityGrid& grid,
                          const InteractionTensor& tensor, double eta) {
    const std::size_t n = grid.size();
    out << 't';
    for (std::size_t j = 0; j < n; ++j) out << ",f_" << j + 1;
    out << ",u,residual\n";
    const auto v = grid.centers();
    CellMassVector g(n);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const auto& f = traj.states[i];
        out << detail::fmt17(traj.times[i]);
        double rho = 0.0, q = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out << ',' << detail::fmt17(f[j]);
            rho += f[j];
            q += f[j] * v[j];
        }
        collision_rhs(f, tensor, eta, g);
        out << ',' << detail::fmt17(rho > 0.0 ? q / rho : 0.0) << ',' << detail::fmt17(inf_norm(g)) << '\n';
    }
}

}  // namespace ktraffic
