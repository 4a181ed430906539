#include "pasting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace cpgame::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm_inf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) return kInf;
        m = std::max(m, std::abs(x));
    }
    return m;
}

Extension extension_of(const Boundary& b, const std::vector<double>& u) {
    Extension e;
    e.smooth = b.smooth;
    switch (b.kind) {
        case Boundary::Kind::open: e.kind = ExtensionKind::none; break;
        case Boundary::Kind::peg:
            e.kind = ExtensionKind::pegged;
            e.target = b.target.get(u);
            e.cost0 = b.cost0;
            e.cost1 = b.cost1;
            break;
        case Boundary::Kind::swap:
            e.kind = ExtensionKind::delegate;
            e.cost0 = b.cost0;
            break;
    }
    return e;
}

/// Value-matching condition of a boundary as an affine form that must vanish.
LinearForm matching_form(const PiecewiseValue& v, Regime r, const Boundary& b, const std::vector<double>& u) {
    double at = b.at.get(u);
    LinearForm inside = v.analytic_form(r, at, 0);
    LinearForm outside;
    if (b.kind == Boundary::Kind::peg) {
        double t = b.target.get(u);
        outside = v.form(r, t, 0);
        outside.constant -= b.cost0 + b.cost1 * std::abs(t - at);
    } else {
        outside = v.form(other(r), at, 0);
        outside.constant -= b.cost0;
    }
    return inside - outside;
}

}  // namespace

PiecewiseValue PastingProblem::build(const std::vector<double>& u) const {
    PiecewiseValue v;
    v.provenance = provenance;
    for (Regime r : kRegimes) {
        const auto& L = layout[index(r)];
        if (!L.present) continue;
        double a = L.lower.kind == Boundary::Kind::open ? -kInf : L.lower.at.get(u);
        double b = L.upper.kind == Boundary::Kind::open ? kInf : L.upper.at.get(u);
        if (!(a < b)) throw SingularSystem(fmt::format("empty continuation interval in {} regime", name(r)));
        auto piece = analytic_piece(fundamentals(profit, r, params), a, b);
        piece.below = extension_of(L.lower, u);
        piece.above = extension_of(L.upper, u);
        v.regime(r) = piece;
    }

    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
    int row = 0;
    auto add = [&](const LinearForm& f) {
        for (int k = 0; k < 4; ++k) A(row, k) = f.coef[k];
        rhs(row) = -f.constant;
        ++row;
    };
    auto fix_zero = [&](int slot) {
        LinearForm f;
        f.coef[slot] = 1.0;
        add(f);
    };
    for (Regime r : kRegimes) {
        const auto& L = layout[index(r)];
        int k = 2 * index(r);
        if (!L.present) {
            fix_zero(k);
            fix_zero(k + 1);
            continue;
        }
        if (L.lower.kind == Boundary::Kind::open)
            fix_zero(k + 1);
        else
            add(matching_form(v, r, L.lower, u));
        if (L.upper.kind == Boundary::Kind::open)
            fix_zero(k);
        else
            add(matching_form(v, r, L.upper, u));
    }
    // equilibrate rows then columns; exponential columns can differ by many orders of magnitude
    Eigen::Vector4d rs = A.cwiseAbs().rowwise().maxCoeff();
    for (int i = 0; i < 4; ++i) rs(i) = rs(i) > 0.0 ? 1.0 / rs(i) : 1.0;
    Eigen::Matrix4d As = rs.asDiagonal() * A;
    Eigen::Vector4d cs = As.cwiseAbs().colwise().maxCoeff().transpose();
    for (int k = 0; k < 4; ++k) cs(k) = cs(k) > 0.0 ? 1.0 / cs(k) : 1.0;
    As = As * cs.asDiagonal();
    Eigen::PartialPivLU<Eigen::Matrix4d> lu(As);
    double rc = lu.rcond();
    if (!(rc > 1e-15)) throw SingularSystem(fmt::format("value-matching system is singular (condition ~ {:.3g})", 1.0 / rc));
    Eigen::Vector4d c = cs.cwiseProduct(lu.solve(rs.cwiseProduct(rhs)));
    v.set_coefficients({c(0), c(1), c(2), c(3)});
    return v;
}

std::vector<double> PastingProblem::residual(const PiecewiseValue& v, const std::vector<double>& u) const {
    std::vector<double> res;
    auto c = v.coefficients();
    for (Regime r : kRegimes) {
        const auto& L = layout[index(r)];
        if (!L.present) continue;
        for (int side = 0; side < 2; ++side) {
            const Boundary& b = side == 0 ? L.lower : L.upper;
            if (b.kind == Boundary::Kind::open) continue;
            double at = b.at.get(u);
            if (b.smooth) {
                double inside = v.analytic_form(r, at, 1).apply(c);
                double outside = 0.0;
                if (b.kind == Boundary::Kind::peg) {
                    double t = b.target.get(u);
                    outside = b.cost1 * ((t > at) - (t < at));
                } else {
                    outside = v.form(other(r), at, 1).apply(c);
                }
                res.push_back(inside - outside);
            }
            if (b.foc) {
                double t = b.target.get(u);
                double slope = side == 0 ? b.cost1 : -b.cost1;
                res.push_back(v.form(r, t, 1).apply(c) - slope);
            }
        }
    }
    return res;
}

std::vector<double> PastingProblem::residual(const std::vector<double>& u) const { return residual(build(u), u); }

double PastingProblem::margin() const {
    double w = 1.0;
    for (int i = 0; i < n_unknowns; ++i) w = std::max(w, hi[i] - lo[i]);
    return 1e-7 * w;
}

std::vector<double> PastingProblem::project(std::vector<double> u) const {
    double m = margin();
    for (int pass = 0; pass < 4; ++pass) {
        for (int i = 0; i < n_unknowns; ++i) u[i] = std::clamp(u[i], lo[i] + m, hi[i] - m);
        for (auto [a, b] : order) {
            if (u[a] > u[b] - m) {
                double mid = 0.5 * (u[a] + u[b]);
                u[a] = mid - m;
                u[b] = mid + m;
            }
        }
    }
    return u;
}

NewtonResult newton(const VecFn& f, const ProjectFn& project, std::vector<double> x0, const NewtonOptions& opt) {
    NewtonResult out;
    auto safe = [&](const std::vector<double>& x) {
        try {
            return f(x);
        } catch (const std::exception&) {
            return std::vector<double>(x.size(), kInf);
        }
    };
    std::vector<double> x = project(std::move(x0));
    std::vector<double> fx = safe(x);
    double nf = norm_inf(fx);
    const int n = static_cast<int>(x.size());
    // one extra step after reaching the tolerance, kept only if it lowers the residual
    bool polish = false;
    for (int it = 0; it <= opt.max_iter; ++it) {
        out.iterations = it;
        if (nf < opt.tol) {
            out.converged = true;
            polish = true;
        }
        if (!std::isfinite(nf) || (it == opt.max_iter && !polish)) break;
        Eigen::MatrixXd J(n, n);
        for (int j = 0; j < n; ++j) {
            double h = 1e-6 * std::max(1.0, std::abs(x[j]));
            auto xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            auto fp = safe(xp), fm = safe(xm);
            for (int i = 0; i < n; ++i) J(i, j) = (fp[i] - fm[i]) / (2.0 * h);
        }
        Eigen::VectorXd F = Eigen::Map<Eigen::VectorXd>(fx.data(), n);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible() || !J.allFinite()) {
            if (!polish) out.message = "singular Jacobian";
            break;
        }
        Eigen::VectorXd d = -lu.solve(F);
        bool accepted = false;
        for (double lam = 1.0; lam > 1e-4; lam *= 0.5) {
            std::vector<double> xn(n);
            for (int i = 0; i < n; ++i) xn[i] = x[i] + lam * d(i);
            xn = project(std::move(xn));
            auto fn = safe(xn);
            double nn = norm_inf(fn);
            if (nn < (1.0 - 1e-4 * lam) * nf) {
                x = std::move(xn);
                fx = std::move(fn);
                nf = nn;
                accepted = true;
                break;
            }
        }
        if (polish || !accepted) {
            if (!accepted && !polish && nf < opt.stall_tol) {
                out.converged = true;
            } else if (!accepted && !polish) {
                out.message = fmt::format("line search stalled at residual {:.3g}, x = [{:.6g}]", nf, fmt::join(x, ", "));
            }
            break;
        }
    }
    out.x = x;
    out.residual = nf;
    if (!out.converged && out.message.empty()) out.message = fmt::format("no convergence, residual {:.3g}", nf);
    return out;
}

double pasting_residual(const PastingProblem& prob, const PiecewiseValue& v, const std::vector<double>& u) {
    auto c = v.coefficients();
    double worst = norm_inf(prob.residual(v, u));
    for (Regime r : kRegimes) {
        const auto& L = prob.layout[index(r)];
        if (!L.present) continue;
        for (const Boundary* b : {&L.lower, &L.upper}) {
            if (b->kind == Boundary::Kind::open) continue;
            double m = matching_form(v, r, *b, u).apply(c);
            worst = std::max(worst, std::abs(m));
        }
    }
    return worst;
}

PastingSolution solve(const PastingProblem& prob, const std::vector<double>& seed,
                      const std::function<bool(const std::vector<double>&)>& accept, const NewtonOptions& opt,
                      int grid) {
    PastingSolution sol;
    const int n = prob.n_unknowns;
    auto f = [&](const std::vector<double>& u) { return prob.residual(u); };
    auto proj = [&](std::vector<double> u) { return prob.project(std::move(u)); };
    auto interior = [&](const std::vector<double>& u) {
        double m = 10.0 * prob.margin();
        for (int i = 0; i < n; ++i)
            if (u[i] <= prob.lo[i] + m || u[i] >= prob.hi[i] - m) return false;
        for (auto [a, b] : prob.order)
            if (u[a] >= u[b] - m) return false;
        return !accept || accept(u);
    };
    auto finish = [&](const std::vector<double>& u, int iters) {
        sol.ok = true;
        sol.u = u;
        sol.value = prob.build(u);
        sol.residual = pasting_residual(prob, sol.value, u);
        sol.iterations = iters;
        return sol;
    };

    if (n == 0) return finish({}, 0);

    std::string last;
    auto r = newton(f, proj, seed, opt);
    if (r.converged && interior(r.x)) return finish(r.x, r.iterations);
    last = r.converged ? "root outside the admissible bracket" : r.message;

    if (n == 1) {
        // scan the bracket for sign changes and polish with a bracketing solver
        const int m = 400;
        double a = prob.lo[0], b = prob.hi[0];
        auto g = [&](double x) {
            try {
                return prob.residual(std::vector<double>{x})[0];
            } catch (const std::exception&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        double xp = a + (b - a) * 0.5 / m, gp = g(xp);
        for (int i = 1; i < m; ++i) {
            double xc = a + (b - a) * (i + 0.5) / m, gc = g(xc);
            if (std::isfinite(gp) && std::isfinite(gc) && (gp == 0.0 || gp * gc < 0.0)) {
                boost::uintmax_t it = 200;
                auto tol = [](double lo_, double hi_) { return std::abs(hi_ - lo_) < 1e-14 * std::max(1.0, std::abs(lo_)); };
                auto br = boost::math::tools::toms748_solve(g, xp, xc, gp, gc, tol, it);
                auto x = proj({0.5 * (br.first + br.second)});
                auto rr = newton(f, proj, x, opt);
                if (rr.converged && interior(rr.x)) return finish(rr.x, rr.iterations + static_cast<int>(it));
            }
            xp = xc;
            gp = gc;
        }
        sol.message = last + "; no sign change of the residual in the bracket";
        return sol;
    }

    std::vector<std::vector<double>> seeds;
    if (n == 2) {
        for (int i = 1; i <= grid; ++i)
            for (int j = 1; j <= grid; ++j) {
                double s = static_cast<double>(i) / (grid + 1), t = static_cast<double>(j) / (grid + 1);
                seeds.push_back({prob.lo[0] + s * (prob.hi[0] - prob.lo[0]), prob.lo[1] + t * (prob.hi[1] - prob.lo[1])});
            }
    } else {
        std::vector<double> centre(n);
        for (int i = 0; i < n; ++i) centre[i] = 0.5 * (prob.lo[i] + prob.hi[i]);
        for (double t : {0.25, 0.5, 0.75, 1.0}) {
            std::vector<double> s(n);
            for (int i = 0; i < n; ++i) s[i] = seed[i] + t * (centre[i] - seed[i]);
            seeds.push_back(s);
        }
    }
    for (const auto& s : seeds) {
        auto rr = newton(f, proj, s, opt);
        if (rr.converged && interior(rr.x)) return finish(rr.x, rr.iterations);
    }
    sol.message = last + "; grid restarts did not find an admissible root";
    return sol;
}

}  // namespace cpgame::detail
