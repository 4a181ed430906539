#include "cpgame/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <fmt/format.h>

namespace cpgame {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

/// (1 - exp(-k z)) / k, continuous at k = 0
double scale_e(double k, double z) { return k == 0.0 ? z : -std::expm1(-k * z) / k; }

double drift_k(double mu, double sigma) { return 2.0 * mu / (sigma * sigma); }

/// Canonical forms assume mu >= 0; negative drifts are reflected through x -> -x.
double hit_lower_canonical(double x, double a, double b, double k) {
    if (x <= a) return 1.0;
    if (x >= b) return 0.0;
    if (std::isinf(a)) return 0.0;
    const double u = x - a;
    if (std::isinf(b)) return std::exp(-k * u);
    const double L = b - a;
    return std::exp(-k * u) * scale_e(k, L - u) / scale_e(k, L);
}

double exit_time_canonical(double x, double a, double b, double mu, double sigma) {
    if (x <= a || x >= b) return 0.0;
    if (sigma == 0.0) return mu > 0.0 ? (b - x) / mu : kInf;
    const double k = drift_k(mu, sigma);
    if (std::isinf(a) && std::isinf(b)) return kInf;
    if (std::isinf(a)) return mu > 0.0 ? (b - x) / mu : kInf;
    if (std::isinf(b)) return kInf;
    const double u = x - a, L = b - a;
    const double kl = k * L;
    if (kl < 1e-4) {
        const double num = 1.0 - k * (L + u) / 3.0 + k * k * (L * L + L * u + u * u) / 12.0;
        const double den = 1.0 - kl / 2.0 + kl * kl / 6.0 - kl * kl * kl / 24.0;
        return u * (L - u) / (sigma * sigma) * num / den;
    }
    return (L * scale_e(k, u) / scale_e(k, L) - u) / mu;
}

double green_canonical(double x, double y, double a, double b, double k, double sigma) {
    if (y <= a || y >= b || x <= a || x >= b) return 0.0;
    const double L = b - a, u = x - a, v = y - a;
    const double c = 2.0 / (sigma * sigma) / scale_e(k, L);
    if (y >= x) return scale_e(k, u) * scale_e(k, b - y) * c;
    return std::exp(-k * (u - v)) * scale_e(k, v) * scale_e(k, L - u) * c;
}

struct Barrier {
    double level = 0.0;
    bool producer = false;
    double target = 0.0;
};

struct Band {
    Barrier lo{-kInf, false, 0.0};
    Barrier hi{kInf, false, 0.0};
};

double star_or_throw(const Threshold& star, const char* what) {
    if (!star.finite()) throw ModelError(fmt::format("impulse threshold without a finite target ({})", what));
    return star.value();
}

/// Effective lower/upper action levels per regime; the producer acts first on ties.
std::array<Band, 2> make_bands(const StrategyPair& s) {
    std::array<Band, 2> out;
    for (Regime r : kRegimes) {
        Band& b = out[index(r)];
        const auto& row = s.producer.row(r);
        if (row.x_l.finite()) b.lo = {row.x_l.value(), true, star_or_throw(row.x_l_star, "x_l*")};
        if (row.x_h.finite()) b.hi = {row.x_h.value(), true, star_or_throw(row.x_h_star, "x_h*")};
        if (r == Regime::contraction && s.consumer.y_l.finite() && s.consumer.y_l.value() > b.lo.level)
            b.lo = {s.consumer.y_l.value(), false, s.consumer.y_l.value()};
        if (r == Regime::expansion && s.consumer.y_h.finite() && s.consumer.y_h.value() < b.hi.level)
            b.hi = {s.consumer.y_h.value(), false, s.consumer.y_h.value()};
    }
    return out;
}

double band_middle(const Band& b) {
    const bool fl = std::isfinite(b.lo.level), fh = std::isfinite(b.hi.level);
    if (fl && fh) return 0.5 * (b.lo.level + b.hi.level);
    if (fl) return b.lo.level + 1.0;
    if (fh) return b.hi.level - 1.0;
    return 0.0;
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

using Rng = boost::random::mt19937_64;

/// Euler stepping between events; Obs receives steps and events.
template <class Obs>
void run_path(const ModelParams& p, const std::array<Band, 2>& bands, double x0, Regime r0, double horizon,
              const SimOptions& opt, Rng& rng, Obs& obs) {
    boost::random::normal_distribution<double> normal;
    boost::random::uniform_01<double> unif;
    const double dt = opt.dt;
    const double sq = p.sigma * std::sqrt(dt);
    const double inv_var = sq > 0.0 ? 2.0 / (sq * sq) : 0.0;
    double x = x0;
    Regime r = r0;

    auto fire = [&](double t, const Barrier& bar, bool lower) {
        if (bar.producer) {
            obs.event(Event{t, lower ? EventKind::impulse_up : EventKind::impulse_down, bar.level, bar.target, r}, r);
            x = bar.target;
        } else {
            obs.event(Event{t, r == Regime::expansion ? EventKind::switch_to_minus : EventKind::switch_to_plus,
                            bar.level, bar.level, r},
                      r);
            x = bar.level;
            r = other(r);
        }
    };
    auto settle = [&](double t) {
        for (int guard = 0; guard < 8; ++guard) {
            const Band& b = bands[index(r)];
            if (x <= b.lo.level)
                fire(t, b.lo, true);
            else if (x >= b.hi.level)
                fire(t, b.hi, false);
            else
                return;
        }
    };

    settle(0.0);
    const auto n = static_cast<long long>(std::ceil(horizon / dt - 1e-9));
    for (long long k = 0; k < n; ++k) {
        const double t0 = static_cast<double>(k) * dt;
        const double t1 = static_cast<double>(k + 1) * dt;
        const Band& b = bands[index(r)];
        const double x1 = x + p.mu(r) * dt + sq * normal(rng);
        int hit = 0;
        if (x1 <= b.lo.level)
            hit = -1;
        else if (x1 >= b.hi.level)
            hit = 1;
        else if (opt.bridge && inv_var > 0.0) {
            const double el = -inv_var * (x - b.lo.level) * (x1 - b.lo.level);
            const double eh = -inv_var * (b.hi.level - x) * (b.hi.level - x1);
            if (el > -40.0 && unif(rng) < std::exp(el))
                hit = -1;
            else if (eh > -40.0 && unif(rng) < std::exp(eh))
                hit = 1;
        }
        if (hit == 0) {
            obs.step(t0, x, x1, r, dt);
            x = x1;
        } else {
            const Barrier& bar = hit < 0 ? b.lo : b.hi;
            obs.step(t0, x, bar.level, r, dt);
            x = bar.level;
            fire(t1, bar, hit < 0);
            settle(t1);
        }
        obs.grid(t1, x, r);
    }
}

std::string coarse_warning(const ModelParams& p, const std::array<Band, 2>& bands, double dt) {
    double narrow = kInf;
    for (const auto& b : bands)
        if (std::isfinite(b.lo.level) && std::isfinite(b.hi.level)) narrow = std::min(narrow, b.hi.level - b.lo.level);
    const double step = p.sigma * std::sqrt(dt);
    if (std::isfinite(narrow) && step > 0.1 * narrow)
        return fmt::format("dt too coarse: per-step diffusion {:.4g} exceeds 10% of the narrowest band {:.4g}", step,
                           narrow);
    return {};
}

struct Recorder {
    PathRecord rec;
    int stride = 1;
    long long count = 0;
    void step(double, double, double, Regime, double) {}
    void event(const Event& e, Regime) { rec.events.push_back(e); }
    void grid(double t, double x, Regime r) {
        if (++count % stride == 0) {
            rec.t.push_back(t);
            rec.x.push_back(x);
            rec.regime.push_back(r);
        }
    }
};

/// Long-run time averages after burn-in with blocked summation.
struct LongRunAcc {
    const QuadProfit* prod = nullptr;
    const QuadProfit* cons = nullptr;
    double burn = 0.0;
    double lo = 0.0, inv_w = 0.0;
    int bins = 0;
    std::vector<double> hist_plus, hist_minus;
    double out_of_range = 0.0;
    // totals
    double T = 0.0, sx = 0.0, sx2 = 0.0, spp = 0.0, spc = 0.0, tplus = 0.0;
    long long switches = 0, impulses = 0;
    // block partial sums
    double bT = 0.0, bx = 0.0, bx2 = 0.0, bpp = 0.0, bpc = 0.0, bplus = 0.0;
    int in_block = 0;

    void flush() {
        T += bT;
        sx += bx;
        sx2 += bx2;
        spp += bpp;
        spc += bpc;
        tplus += bplus;
        bT = bx = bx2 = bpp = bpc = bplus = 0.0;
        in_block = 0;
    }
    void step(double t0, double x, double, Regime r, double dt) {
        if (t0 < burn) return;
        bT += dt;
        bx += x * dt;
        bx2 += x * x * dt;
        bpp += (*prod)(x)*dt;
        bpc += (*cons)(x)*dt;
        if (r == Regime::expansion) bplus += dt;
        const double pos = (x - lo) * inv_w;
        if (pos >= 0.0 && pos < bins) {
            auto& h = r == Regime::expansion ? hist_plus : hist_minus;
            h[static_cast<size_t>(pos)] += dt;
        } else {
            out_of_range += dt;
        }
        if (++in_block == 65536) flush();
    }
    void event(const Event& e, Regime) {
        if (e.t < burn) return;
        if (e.kind == EventKind::switch_to_plus || e.kind == EventKind::switch_to_minus)
            ++switches;
        else
            ++impulses;
    }
    void grid(double, double, Regime) {}
};

struct PayoffAcc {
    const ModelParams* p = nullptr;
    const QuadProfit* prod = nullptr;
    const QuadProfit* cons = nullptr;
    double vp = 0.0, vc = 0.0;
    void step(double t0, double x0, double x1, Regime, double dt) {
        const double d0 = std::exp(-p->beta * t0), d1 = std::exp(-p->beta * (t0 + dt));
        vp += 0.5 * dt * (d0 * (*prod)(x0) + d1 * (*prod)(x1));
        vc += 0.5 * dt * (d0 * (*cons)(x0) + d1 * (*cons)(x1));
    }
    void event(const Event& e, Regime r) {
        const double d = std::exp(-p->beta * e.t);
        if (e.kind == EventKind::impulse_up || e.kind == EventKind::impulse_down)
            vp -= d * (p->kappa0 + p->kappa1 * std::abs(e.post - e.pre));
        else
            vc -= d * p->h(r);
    }
    void grid(double, double, Regime) {}
};

template <class Fn>
void for_each_path(int n, int threads, Fn fn) {
    int nt = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    nt = std::min(nt, n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < nt; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

double resolve_x0(const SimConfig& cfg, const std::array<Band, 2>& bands) {
    return std::isnan(cfg.x0) ? band_middle(bands[index(cfg.r0)]) : cfg.x0;
}

}  // namespace

double hitting_prob(double x, double a, double b, double mu, double sigma) {
    if (!(a < b)) throw std::invalid_argument("hitting_prob needs a < b");
    if (x <= a) return 1.0;
    if (x >= b) return 0.0;
    if (sigma == 0.0) return mu < 0.0 ? 1.0 : 0.0;
    const double k = drift_k(mu, sigma);
    if (k >= 0.0) return hit_lower_canonical(x, a, b, k);
    return 1.0 - hit_lower_canonical(-x, -b, -a, -k);
}

double expected_exit_time(double x, double a, double b, double mu, double sigma) {
    if (!(a < b)) throw std::invalid_argument("expected_exit_time needs a < b");
    if (mu >= 0.0) return exit_time_canonical(x, a, b, mu, sigma);
    return exit_time_canonical(-x, -b, -a, -mu, sigma);
}

double green_density(double x, double y, double a, double b, double mu, double sigma) {
    if (!(std::isfinite(a) && std::isfinite(b) && a < b && sigma > 0.0))
        throw std::invalid_argument("green_density needs a finite interval and sigma > 0");
    const double k = drift_k(mu, sigma);
    if (k >= 0.0) return green_canonical(x, y, a, b, k, sigma);
    return green_canonical(-x, -y, -b, -a, -k, sigma);
}

double occupation_integral(const std::function<double(double)>& f, double x, double a, double b, double mu,
                           double sigma) {
    if (x <= a || x >= b) return 0.0;
    using boost::math::quadrature::gauss_kronrod;
    auto g = [&](double y) { return green_density(x, y, a, b, mu, sigma) * f(y); };
    return gauss_kronrod<double, 61>::integrate(g, a, x, 15, 1e-13) +
           gauss_kronrod<double, 61>::integrate(g, x, b, 15, 1e-13);
}

const char* name(EventKind k) {
    switch (k) {
        case EventKind::impulse_up: return "impulse_up";
        case EventKind::impulse_down: return "impulse_down";
        case EventKind::switch_to_plus: return "switch_to_plus";
        case EventKind::switch_to_minus: return "switch_to_minus";
    }
    return "?";
}

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) {
    return splitmix64(splitmix64(seed) ^ (path * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
}

PathRecord simulate_path(const ModelParams& p, const StrategyPair& s, double x0, Regime r0, double horizon,
                         std::uint64_t seed, const SimOptions& opt) {
    if (!(opt.dt > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("dt and horizon must be positive");
    const auto bands = make_bands(s);
    Recorder obs;
    obs.stride = std::max(1, opt.record_stride);
    obs.rec.t.push_back(0.0);
    obs.rec.x.push_back(x0);
    obs.rec.regime.push_back(r0);
    if (auto w = coarse_warning(p, bands, opt.dt); !w.empty()) obs.rec.warnings.push_back(w);
    Rng rng(path_seed(seed, 0));
    run_path(p, bands, x0, r0, horizon, opt, rng, obs);
    return std::move(obs.rec);
}

PathRecord simulate_path(const EquilibriumResult& e, double x0, Regime r0, double horizon, std::uint64_t seed,
                         const SimOptions& opt) {
    return simulate_path(e.params, e.strategies, x0, r0, horizon, seed, opt);
}

LongRun simulate_long_run(const ModelParams& p, const StrategyPair& s, const SimConfig& cfg) {
    if (cfg.paths < 1 || !(cfg.horizon > 0.0) || !(cfg.dt > 0.0) || cfg.bins < 1)
        throw std::invalid_argument("simulation needs paths >= 1, horizon > 0, dt > 0, bins >= 1");
    const auto bands = make_bands(s);
    const auto [prod, cons] = build_profits(p);
    const double burn = cfg.burn_in < 0.0 ? 50.0 / p.beta : cfg.burn_in;
    if (!(cfg.horizon > burn)) throw std::invalid_argument("horizon must exceed the burn-in");

    double lo = kInf, hi = -kInf;
    for (const auto& b : bands) {
        if (std::isfinite(b.lo.level)) lo = std::min(lo, b.lo.level);
        if (std::isfinite(b.hi.level)) hi = std::max(hi, b.hi.level);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw ModelError("no finite price band: the controlled price is not ergodic");
    const double pad = 6.0 * p.sigma * std::sqrt(cfg.dt);
    lo -= pad;
    hi += pad;

    SimOptions opt;
    opt.dt = cfg.dt;
    opt.bridge = cfg.bridge;
    const double x0 = resolve_x0(cfg, bands);

    std::vector<LongRunAcc> accs(cfg.paths);
    for_each_path(cfg.paths, cfg.threads, [&](int i) {
        LongRunAcc a;
        a.prod = &prod;
        a.cons = &cons;
        a.burn = burn;
        a.lo = lo;
        a.bins = cfg.bins;
        a.inv_w = cfg.bins / (hi - lo);
        a.hist_plus.assign(cfg.bins, 0.0);
        a.hist_minus.assign(cfg.bins, 0.0);
        Rng rng(path_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        run_path(p, bands, x0, cfg.r0, cfg.horizon, opt, rng, a);
        a.flush();
        accs[i] = std::move(a);
    });

    LongRun out;
    auto& st = out.stats;
    double T = 0, sx = 0, sx2 = 0, spp = 0, spc = 0, tplus = 0, oor = 0;
    long long sw = 0, imp = 0;
    std::vector<double> hp(cfg.bins, 0.0), hm(cfg.bins, 0.0);
    for (const auto& a : accs) {
        T += a.T;
        sx += a.sx;
        sx2 += a.sx2;
        spp += a.spp;
        spc += a.spc;
        tplus += a.tplus;
        oor += a.out_of_range;
        sw += a.switches;
        imp += a.impulses;
        for (int j = 0; j < cfg.bins; ++j) {
            hp[j] += a.hist_plus[j];
            hm[j] += a.hist_minus[j];
        }
    }
    st.years = T;
    st.mean = sx / T;
    st.var = sx2 / T - st.mean * st.mean;
    st.e_pi_p = spp / T;
    st.e_pi_c = spc / T;
    st.apoo_p = st.e_pi_p / prod.peak;
    st.apoo_c = st.e_pi_c / cons.peak;
    st.switches_per_year = static_cast<double>(sw) / T;
    st.impulses_per_year = static_cast<double>(imp) / T;
    st.rho_plus = tplus / T;
    if (auto w = coarse_warning(p, bands, cfg.dt); !w.empty()) st.warnings.push_back(w);
    if (oor > 0.0) st.warnings.push_back(fmt::format("{:.3g} of the time fell outside the histogram range", oor / T));

    auto& d = out.density;
    d.lo = lo;
    d.hi = hi;
    const double w = (hi - lo) / cfg.bins;
    for (int j = 0; j <= cfg.bins; ++j) d.edges.push_back(lo + w * j);
    for (int j = 0; j < cfg.bins; ++j) {
        d.mass_plus.push_back(hp[j] / T);
        d.mass_minus.push_back(hm[j] / T);
        d.mass.push_back((hp[j] + hm[j]) / T);
        d.centres.push_back(lo + w * (j + 0.5));
    }
    d.bandwidth = 2.0 * w;
    const double norm = 1.0 / (d.bandwidth * std::sqrt(2.0 * M_PI));
    for (int j = 0; j < cfg.bins; ++j) {
        double s_all = 0, s_p = 0, s_m = 0;
        for (int i = 0; i < cfg.bins; ++i) {
            const double z = (d.centres[j] - d.centres[i]) / d.bandwidth;
            const double kz = norm * std::exp(-0.5 * z * z);
            s_all += d.mass[i] * kz;
            s_p += d.mass_plus[i] * kz;
            s_m += d.mass_minus[i] * kz;
        }
        d.smooth.push_back(s_all);
        d.smooth_plus.push_back(s_p);
        d.smooth_minus.push_back(s_m);
    }
    return out;
}

LongRun simulate_long_run(const EquilibriumResult& e, const SimConfig& cfg) {
    return simulate_long_run(e.params, e.strategies, cfg);
}

LongRunStats long_run_stats(const EquilibriumResult& e, const SimConfig& cfg) {
    return simulate_long_run(e, cfg).stats;
}

Density stationary_density(const EquilibriumResult& e, const SimConfig& cfg) {
    return simulate_long_run(e, cfg).density;
}

PayoffOracle discounted_payoff(const ModelParams& p, const StrategyPair& s, double x0, Regime r0,
                               const SimConfig& cfg) {
    if (cfg.paths < 2) throw std::invalid_argument("payoff oracle needs at least two paths");
    const auto bands = make_bands(s);
    const auto [prod, cons] = build_profits(p);
    const double horizon = cfg.horizon > 0.0 ? cfg.horizon : 40.0 / p.beta;
    SimOptions opt;
    opt.dt = cfg.dt;
    opt.bridge = cfg.bridge;
    std::vector<double> vp(cfg.paths), vc(cfg.paths);
    for_each_path(cfg.paths, cfg.threads, [&](int i) {
        PayoffAcc a;
        a.p = &p;
        a.prod = &prod;
        a.cons = &cons;
        Rng rng(path_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        run_path(p, bands, x0, r0, horizon, opt, rng, a);
        vp[i] = a.vp;
        vc[i] = a.vc;
    });
    auto summarize = [&](const std::vector<double>& v) {
        PayoffEstimate e;
        e.paths = static_cast<int>(v.size());
        const double n = static_cast<double>(v.size());
        e.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double z : v) ss += (z - e.mean) * (z - e.mean);
        e.se = std::sqrt(ss / (n - 1.0) / n);
        return e;
    };
    return {summarize(vp), summarize(vc)};
}

const char* name(ChainState s) {
    switch (s) {
        case ChainState::S_plus: return "S+";
        case ChainState::S_minus: return "S-";
        case ChainState::I_l_minus: return "I_l-";
        case ChainState::I_h_minus: return "I_h-";
        case ChainState::I_l_plus: return "I_l+";
        case ChainState::I_h_plus: return "I_h+";
    }
    return "?";
}

Regime regime_of(ChainState s) {
    switch (s) {
        case ChainState::S_plus:
        case ChainState::I_l_plus:
        case ChainState::I_h_plus: return Regime::expansion;
        default: return Regime::contraction;
    }
}

ChainState state_of(const Event& e) {
    switch (e.kind) {
        case EventKind::switch_to_plus: return ChainState::S_plus;
        case EventKind::switch_to_minus: return ChainState::S_minus;
        case EventKind::impulse_up:
            return e.regime == Regime::expansion ? ChainState::I_l_plus : ChainState::I_l_minus;
        case EventKind::impulse_down:
            return e.regime == Regime::expansion ? ChainState::I_h_plus : ChainState::I_h_minus;
    }
    return ChainState::S_plus;
}

namespace {

struct FirstEvent {
    std::array<double, 6> prob{};
    double zeta = 0.0;
};

ChainState lower_state(Regime r, const Barrier& b) {
    if (b.producer) return r == Regime::expansion ? ChainState::I_l_plus : ChainState::I_l_minus;
    return ChainState::S_plus;
}

ChainState upper_state(Regime r, const Barrier& b) {
    if (b.producer) return r == Regime::expansion ? ChainState::I_h_plus : ChainState::I_h_minus;
    return ChainState::S_minus;
}

FirstEvent first_event(const ModelParams& p, const std::array<Band, 2>& bands, double x, Regime r,
                       std::vector<std::string>* diag) {
    FirstEvent fe;
    const Band& b = bands[index(r)];
    if (x <= b.lo.level) {
        fe.prob[index(lower_state(r, b.lo))] = 1.0;
        return fe;
    }
    if (x >= b.hi.level) {
        fe.prob[index(upper_state(r, b.hi))] = 1.0;
        return fe;
    }
    double pl = hitting_prob(x, b.lo.level, b.hi.level, p.mu(r), p.sigma);
    fe.zeta = expected_exit_time(x, b.lo.level, b.hi.level, p.mu(r), p.sigma);
    if (std::isinf(b.lo.level) && pl > 0.0) {
        if (diag) diag->push_back(fmt::format("{} regime can escape to -inf from {:.6g}", name(r), x));
        pl = 0.0;
    }
    if (std::isinf(b.hi.level) && pl < 1.0) {
        if (diag) diag->push_back(fmt::format("{} regime can escape to +inf from {:.6g}", name(r), x));
        pl = 1.0;
    }
    if (pl > 0.0) fe.prob[index(lower_state(r, b.lo))] += pl;
    if (pl < 1.0) fe.prob[index(upper_state(r, b.hi))] += 1.0 - pl;
    return fe;
}

double start_point(const StrategyPair& s, ChainState st, bool& ok) {
    const Threshold* t = nullptr;
    switch (st) {
        case ChainState::S_plus: t = &s.consumer.y_l; break;
        case ChainState::S_minus: t = &s.consumer.y_h; break;
        case ChainState::I_l_minus: t = s.producer.row(Regime::contraction).x_l.finite()
                                            ? &s.producer.row(Regime::contraction).x_l_star
                                            : nullptr;
            break;
        case ChainState::I_h_minus: t = s.producer.row(Regime::contraction).x_h.finite()
                                            ? &s.producer.row(Regime::contraction).x_h_star
                                            : nullptr;
            break;
        case ChainState::I_l_plus: t = s.producer.row(Regime::expansion).x_l.finite()
                                           ? &s.producer.row(Regime::expansion).x_l_star
                                           : nullptr;
            break;
        case ChainState::I_h_plus: t = s.producer.row(Regime::expansion).x_h.finite()
                                           ? &s.producer.row(Regime::expansion).x_h_star
                                           : nullptr;
            break;
    }
    ok = t && t->finite();
    return ok ? t->value() : kNaN;
}

}  // namespace

JumpChain build_jump_chain(const ModelParams& p, const StrategyPair& s, Regime r0, double x0) {
    JumpChain c;
    const auto bands = make_bands(s);
    for (ChainState st : kChainStates) {
        bool ok = false;
        c.start[index(st)] = start_point(s, st, ok);
        c.defined[index(st)] = ok;
        if (!ok) continue;
        auto fe = first_event(p, bands, c.start[index(st)], regime_of(st), &c.diagnostics);
        c.P[index(st)] = fe.prob;
        c.zeta[index(st)] = fe.zeta;
    }
    // states without a target copy a defined state of the same regime, the switch state first
    for (ChainState st : kChainStates) {
        if (c.defined[index(st)]) continue;
        const Regime r = regime_of(st);
        const std::array<ChainState, 3> order =
            r == Regime::expansion
                ? std::array<ChainState, 3>{ChainState::S_plus, ChainState::I_l_plus, ChainState::I_h_plus}
                : std::array<ChainState, 3>{ChainState::S_minus, ChainState::I_h_minus, ChainState::I_l_minus};
        bool copied = false;
        for (ChainState src : order)
            if (c.defined[index(src)]) {
                c.P[index(st)] = c.P[index(src)];
                c.zeta[index(st)] = c.zeta[index(src)];
                c.start[index(st)] = c.start[index(src)];
                copied = true;
                break;
            }
        if (!copied) {
            c.P[index(st)][index(st)] = 1.0;
            c.diagnostics.push_back(fmt::format("state {} has no entry point in its regime", name(st)));
        }
    }

    // states reachable from the first event after (x0, r0)
    const double start = std::isnan(x0) ? band_middle(bands[index(r0)]) : x0;
    const auto init = first_event(p, bands, start, r0, &c.diagnostics).prob;
    std::array<bool, 6> reach{};
    std::vector<int> stack;
    for (int i = 0; i < 6; ++i)
        if (init[i] > 0.0) {
            reach[i] = true;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < 6; ++j)
            if (c.P[i][j] > 0.0 && !reach[j]) {
                reach[j] = true;
                stack.push_back(j);
            }
    }
    std::vector<int> idx;
    for (int i = 0; i < 6; ++i)
        if (reach[i]) idx.push_back(i);
    const int n = static_cast<int>(idx.size());
    Eigen::MatrixXd A(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) A(a, b) = c.P[idx[b]][idx[a]] - (a == b ? 1.0 : 0.0);
    A.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    c.pi.fill(0.0);
    if (lu.rank() == n) {
        Eigen::VectorXd sol = lu.solve(rhs);
        for (int a = 0; a < n; ++a) c.pi[idx[a]] = std::max(0.0, sol(a));
    } else {
        c.diagnostics.push_back("several closed classes are reachable; using the Cesaro limit from the start");
        std::array<double, 6> cur = init, acc{};
        const int N = 20000;
        for (int it = 0; it < N; ++it) {
            std::array<double, 6> nxt{};
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) nxt[j] += cur[i] * c.P[i][j];
            cur = nxt;
            for (int j = 0; j < 6; ++j) acc[j] += cur[j] / N;
        }
        c.pi = acc;
    }
    const double tot = std::accumulate(c.pi.begin(), c.pi.end(), 0.0);
    for (double& v : c.pi) v /= tot;
    c.stationarity_residual = 0.0;
    for (int j = 0; j < 6; ++j) {
        double v = 0.0;
        for (int i = 0; i < 6; ++i) v += c.pi[i] * c.P[i][j];
        c.stationarity_residual = std::max(c.stationarity_residual, std::abs(v - c.pi[j]));
    }
    return c;
}

JumpChain build_jump_chain(const EquilibriumResult& e) { return build_jump_chain(e.params, e.strategies); }

std::pair<double, double> regime_occupation(const JumpChain& c) {
    double num = 0.0, den = 0.0;
    for (ChainState st : kChainStates) {
        const double w = c.pi[index(st)] * c.zeta[index(st)];
        if (w == 0.0) continue;
        den += w;
        if (regime_of(st) == Regime::expansion) num += w;
    }
    if (!(den > 0.0) || !std::isfinite(den)) return {kNaN, kNaN};
    return {num / den, 1.0 - num / den};
}

SwitchTime expected_switch_time(const ModelParams& p, const StrategyPair& s, double x0) {
    SwitchTime out;
    const auto bands = make_bands(s);
    const Band& b = bands[index(Regime::expansion)];
    if (x0 >= b.hi.level && !b.hi.producer) return out;
    const auto c = build_jump_chain(p, s, Regime::expansion, x0);
    const std::array<ChainState, 3> plus{ChainState::S_plus, ChainState::I_l_plus, ChainState::I_h_plus};
    Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
    Eigen::Vector3d z;
    for (int a = 0; a < 3; ++a) {
        z(a) = c.zeta[index(plus[a])];
        for (int bb = 0; bb < 3; ++bb) M(a, bb) -= c.P[index(plus[a])][index(plus[bb])];
    }
    const auto fe = first_event(p, bands, x0, Regime::expansion, nullptr);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
    if (lu.rank() < 3 || !z.allFinite()) {
        out.first_step = kInf;
    } else {
        Eigen::Vector3d T = lu.solve(z);
        out.first_step = fe.zeta;
        for (int a = 0; a < 3; ++a) out.first_step += fe.prob[index(plus[a])] * T(a);
    }
    const auto& row = s.producer.row(Regime::expansion);
    out.literal = out.corrected = kNaN;
    if (row.x_l.finite() && s.consumer.y_h.finite()) {
        const double a = row.x_l.value(), yh = s.consumer.y_h.value(), star = row.x_l_star.as_double();
        const double mu = p.mu_plus;
        auto closed_form = [&](ChainState via) {
            return expected_exit_time(x0, a, yh, mu, p.sigma) + hitting_prob(x0, a, yh, mu, p.sigma) /
                                                                    c.P[index(via)][index(ChainState::S_minus)] *
                                                                    expected_exit_time(star, a, yh, mu, p.sigma);
        };
        if (c.defined[index(ChainState::I_h_plus)]) out.literal = closed_form(ChainState::I_h_plus);
        out.corrected = closed_form(ChainState::I_l_plus);
    }
    return out;
}

SwitchTime expected_switch_time(const EquilibriumResult& e, double x0) {
    return expected_switch_time(e.params, e.strategies, x0);
}

LongRunStats exact_long_run_stats(const ModelParams& p, const StrategyPair& s, Regime r0) {
    const auto bands = make_bands(s);
    const auto c = build_jump_chain(p, s, r0);
    const auto [prod, cons] = build_profits(p);
    const std::array<std::function<double(double)>, 5> fs{
        [](double) { return 1.0; }, [](double y) { return y; }, [](double y) { return y * y; },
        [&](double y) { return prod(y); }, [&](double y) { return cons(y); }};
    std::array<double, 5> tot{};
    double tplus = 0.0, sw = 0.0, imp = 0.0;
    LongRunStats st;
    st.warnings = c.diagnostics;
    for (ChainState cs : kChainStates) {
        const double w = c.pi[index(cs)];
        if (w <= 0.0) continue;
        if (cs == ChainState::S_plus || cs == ChainState::S_minus)
            sw += w;
        else
            imp += w;
        const Regime r = regime_of(cs);
        const Band& b = bands[index(r)];
        if (!std::isfinite(b.lo.level) || !std::isfinite(b.hi.level))
            throw ModelError(fmt::format("{} band is unbounded; exact moments need finite bands", name(r)));
        for (size_t k = 0; k < fs.size(); ++k) {
            const double v = w * occupation_integral(fs[k], c.start[index(cs)], b.lo.level, b.hi.level, p.mu(r),
                                                     p.sigma);
            tot[k] += v;
            if (k == 0 && r == Regime::expansion) tplus += v;
        }
    }
    const double T = tot[0];
    st.years = kInf;
    st.mean = tot[1] / T;
    st.var = tot[2] / T - st.mean * st.mean;
    st.e_pi_p = tot[3] / T;
    st.e_pi_c = tot[4] / T;
    st.apoo_p = st.e_pi_p / prod.peak;
    st.apoo_c = st.e_pi_c / cons.peak;
    st.switches_per_year = sw / T;
    st.impulses_per_year = imp / T;
    st.rho_plus = tplus / T;
    return st;
}

LongRunStats exact_long_run_stats(const EquilibriumResult& e) {
    return exact_long_run_stats(e.params, e.strategies, e.reachable[0] ? Regime::expansion : Regime::contraction);
}

std::array<std::pair<double, double>, 2> effective_bands(const StrategyPair& s) {
    const auto bands = make_bands(s);
    return {std::pair{bands[0].lo.level, bands[0].hi.level}, std::pair{bands[1].lo.level, bands[1].hi.level}};
}

double band_start(const StrategyPair& s, Regime r) { return band_middle(make_bands(s)[index(r)]); }

std::array<std::vector<double>, 3> exact_density(const ModelParams& p, const StrategyPair& s,
                                                 const std::vector<double>& xs, Regime r0) {
    const auto bands = make_bands(s);
    const auto c = build_jump_chain(p, s, r0);
    double T = 0.0;
    for (ChainState cs : kChainStates) T += c.pi[index(cs)] > 0.0 ? c.pi[index(cs)] * c.zeta[index(cs)] : 0.0;
    std::array<std::vector<double>, 3> out;
    for (auto& v : out) v.assign(xs.size(), 0.0);
    for (ChainState cs : kChainStates) {
        const double w = c.pi[index(cs)];
        if (w <= 0.0) continue;
        const Regime r = regime_of(cs);
        const Band& b = bands[index(r)];
        for (size_t i = 0; i < xs.size(); ++i) {
            const double g = w * green_density(c.start[index(cs)], xs[i], b.lo.level, b.hi.level, p.mu(r), p.sigma) / T;
            out[0][i] += g;
            out[r == Regime::expansion ? 1 : 2][i] += g;
        }
    }
    return out;
}

}  // namespace cpgame
