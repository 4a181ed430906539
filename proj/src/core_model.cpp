#include "cpgame/core_model.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace cpgame {

const char* name(Regime r) { return r == Regime::expansion ? "expansion" : "contraction"; }

void validate(const ModelParams& p) {
    if (!(p.beta > 0)) throw ModelError("beta must be > 0");
    if (!(p.sigma > 0)) throw ModelError("sigma must be > 0");
    if (!(p.mu_minus < 0 && 0 < p.mu_plus)) throw ModelError("drifts must satisfy mu_minus < 0 < mu_plus");
    if (p.h_plus < 0 || p.h_minus < 0) throw ModelError("switching costs must be >= 0");
    if (!(p.kappa0 > 0)) throw ModelError("kappa0 must be > 0");
    if (p.kappa1 < 0) throw ModelError("kappa1 must be >= 0");
    if (p.producer_direct.has_value() == p.producer_structural.has_value())
        throw ModelError("producer profit needs exactly one of the direct or structural specs");
    if (p.consumer_direct.has_value() == p.consumer_structural.has_value())
        throw ModelError("consumer profit needs exactly one of the direct or structural specs");
    if (p.consumer_structural) {
        const auto& c = *p.consumer_structural;
        if (!(c.alpha > 0)) throw ModelError("alpha must be > 0");
        if (!(c.p1 > 1.0 / c.alpha))
            throw ModelError(fmt::format("consumer profit is not concave: need p1 > 1/alpha, got p1 = {} and 1/alpha = {}",
                                         c.p1, 1.0 / c.alpha));
    }
    build_profits(p);
}

QuadProfit make_profit(double g0, double g1, double g2) {
    if (!(g2 < 0)) throw ModelError(fmt::format("profit rate must be concave, got leading coefficient {}", g2));
    QuadProfit q{g0, g1, g2};
    double disc = g1 * g1 - 4.0 * g2 * g0;
    if (!(disc > 0)) throw ModelError("profit rate has no positive habitat");
    double s = std::sqrt(disc);
    // stable quadratic roots
    double t = -0.5 * (g1 + std::copysign(s, g1));
    double r1 = t / g2;
    double r2 = (t != 0.0) ? g0 / t : -g1 / g2 - r1;
    q.x1 = std::min(r1, r2);
    q.x2 = std::max(r1, r2);
    q.xbar = -g1 / (2.0 * g2);
    q.peak = q(q.xbar);
    return q;
}

QuadProfit make_profit(const DirectProfit& d) {
    QuadProfit q{-d.a * d.x1 * d.x2, d.a * (d.x1 + d.x2), -d.a};
    if (!(d.a > 0) || !(d.x1 < d.x2)) throw ModelError("direct profit needs a > 0 and x1 < x2");
    q.x1 = d.x1;
    q.x2 = d.x2;
    q.xbar = 0.5 * (d.x1 + d.x2);
    q.peak = q(q.xbar);
    return q;
}

std::pair<QuadProfit, QuadProfit> build_profits(const ModelParams& p) {
    QuadProfit prod;
    if (p.producer_direct) {
        prod = make_profit(*p.producer_direct);
    } else if (p.producer_structural) {
        const auto& s = *p.producer_structural;
        if (!(s.d1 > 0)) throw ModelError("producer demand slope d1 must be > 0");
        prod = make_profit(DirectProfit{s.d1, s.c_p, s.d0 / s.d1});
    } else {
        throw ModelError("producer profit spec missing");
    }
    QuadProfit cons;
    if (p.consumer_direct) {
        cons = make_profit(*p.consumer_direct);
    } else if (p.consumer_structural) {
        const auto& c = *p.consumer_structural;
        if (!(c.p1 > 1.0 / c.alpha))
            throw ModelError(fmt::format("consumer profit is not concave: need p1 > 1/alpha, got p1 = {} and 1/alpha = {}",
                                         c.p1, 1.0 / c.alpha));
        double a = c.d0_prime - c.d1_prime * c.p0;
        double m0 = c.p0 - c.c_c / c.alpha;
        double m1 = c.p1 - 1.0 / c.alpha;
        cons = make_profit(a * m0, a * m1 - c.d1_prime * c.p1 * m0, c.d1_prime * c.p1 * (1.0 / c.alpha - c.p1));
    } else {
        throw ModelError("consumer profit spec missing");
    }
    return {prod, cons};
}

std::pair<double, double> char_roots(double mu, const ModelParams& p) {
    double s2 = p.sigma * p.sigma;
    double disc = std::sqrt(mu * mu + 2.0 * p.beta * s2);
    // the root whose numerator does not cancel is computed directly, the other through Vieta
    if (mu >= 0) {
        double t2 = (-mu - disc) / s2;
        double t1 = -2.0 * p.beta / (s2 * t2);
        return {t1, t2};
    }
    double t1 = (-mu + disc) / s2;
    double t2 = -2.0 * p.beta / (s2 * t1);
    return {t1, t2};
}

std::array<double, 3> particular_solution(const QuadProfit& profit, double mu, const ModelParams& p) {
    double q2 = profit.g2 / p.beta;
    double q1 = (profit.g1 + 2.0 * mu * q2) / p.beta;
    double q0 = (profit.g0 + p.sigma * p.sigma * q2 + mu * q1) / p.beta;
    return {q2, q1, q0};
}

RegimeFundamentals fundamentals(const QuadProfit& profit, Regime r, const ModelParams& p) {
    RegimeFundamentals f;
    f.regime = r;
    f.mu = p.mu(r);
    std::tie(f.theta1, f.theta2) = char_roots(f.mu, p);
    f.particular = particular_solution(profit, f.mu, p);
    return f;
}

double ode_operator(double w, double wx, double wxx, double x, double mu, const QuadProfit& profit,
                    const ModelParams& p) {
    return -p.beta * w + mu * wx + 0.5 * p.sigma * p.sigma * wxx + profit(x);
}

ModelParams table2_params() {
    ModelParams p;
    p.beta = 0.1;
    p.sigma = 0.25;
    p.mu_plus = 0.1;
    p.mu_minus = -0.1;
    p.producer_direct = DirectProfit{0.25, 2.0, 6.0};
    p.consumer_direct = DirectProfit{0.75, 1.0, 5.0};
    p.h_plus = p.h_minus = 10.0;
    p.kappa0 = 3.0;
    p.kappa1 = 0.0;
    return p;
}

ModelParams case_study_params() {
    ModelParams p;
    p.beta = 0.1;
    p.sigma = 10.0;
    p.mu_plus = 0.15;
    p.mu_minus = -0.15;
    p.producer_structural = ProducerStructural{30.0, 1.0, 0.01};
    p.consumer_structural = ConsumerStructural{5.0, 0.05, 10.0, 1.1, 0.95, 10.0};
    p.h_plus = p.h_minus = 29.0;
    p.kappa0 = 24.5;
    p.kappa1 = 0.0;
    return p;
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ModelParams parse_config(const std::string& text) {
    ModelParams p;
    DirectProfit pd, cd;
    ProducerStructural ps;
    ConsumerStructural cs;
    bool has_pd = false, has_ps = false, has_cd = false, has_cs = false;

    using Setter = std::function<void(double)>;
    auto flag = [](bool& f, double& slot) { return [&f, &slot](double v) { slot = v; f = true; }; };
    std::map<std::string, std::map<std::string, Setter>> keys{
        {"market",
         {{"beta", [&](double v) { p.beta = v; }},
          {"sigma", [&](double v) { p.sigma = v; }},
          {"mu_plus", [&](double v) { p.mu_plus = v; }},
          {"mu_minus", [&](double v) { p.mu_minus = v; }}}},
        {"producer",
         {{"a_p", flag(has_pd, pd.a)},
          {"x1_p", flag(has_pd, pd.x1)},
          {"x2_p", flag(has_pd, pd.x2)},
          {"c_p", flag(has_ps, ps.c_p)},
          {"d0", flag(has_ps, ps.d0)},
          {"d1", flag(has_ps, ps.d1)}}},
        {"consumer",
         {{"a_c", flag(has_cd, cd.a)},
          {"x1_c", flag(has_cd, cd.x1)},
          {"x2_c", flag(has_cd, cd.x2)},
          {"d0_prime", flag(has_cs, cs.d0_prime)},
          {"d1_prime", flag(has_cs, cs.d1_prime)},
          {"p0", flag(has_cs, cs.p0)},
          {"p1", flag(has_cs, cs.p1)},
          {"alpha", flag(has_cs, cs.alpha)},
          {"c_c", flag(has_cs, cs.c_c)}}},
        {"costs",
         {{"h_plus", [&](double v) { p.h_plus = v; }},
          {"h_minus", [&](double v) { p.h_minus = v; }},
          {"h0", [&](double v) { p.h_plus = p.h_minus = v; }},
          {"kappa0", [&](double v) { p.kappa0 = v; }},
          {"kappa1", [&](double v) { p.kappa1 = v; }}}},
    };

    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(fmt::format("line {}: malformed section header", line_no), line, line_no);
            section = trim(line.substr(1, line.size() - 2));
            if (!keys.count(section))
                throw ConfigError(fmt::format("line {}: unknown section [{}]", line_no, section), section, line_no);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(fmt::format("line {}: expected key = value", line_no), line, line_no);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(fmt::format("line {}: key '{}' outside any section", line_no, key), key, line_no);
        auto& table = keys[section];
        auto it = table.find(key);
        if (it == table.end())
            throw ConfigError(fmt::format("line {}: unknown key '{}' in [{}]", line_no, key, section), key, line_no);
        double v = 0;
        try {
            size_t used = 0;
            v = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("line {}: key '{}' has non-numeric value '{}'", line_no, key, val), key, line_no);
        }
        it->second(v);
    }
    if (has_pd) p.producer_direct = pd;
    if (has_ps) p.producer_structural = ps;
    if (has_cd) p.consumer_direct = cd;
    if (has_cs) p.consumer_structural = cs;
    try {
        validate(p);
    } catch (const ModelError& e) {
        throw ConfigError(std::string("invalid parameters: ") + e.what(), "", 0);
    }
    return p;
}

ModelParams load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path, "", 0);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string to_config(const ModelParams& p) {
    std::string s;
    s += fmt::format("[market]\nbeta = {:.17g}\nsigma = {:.17g}\nmu_plus = {:.17g}\nmu_minus = {:.17g}\n\n", p.beta,
                     p.sigma, p.mu_plus, p.mu_minus);
    s += "[producer]\n";
    if (p.producer_direct)
        s += fmt::format("a_p = {:.17g}\nx1_p = {:.17g}\nx2_p = {:.17g}\n", p.producer_direct->a, p.producer_direct->x1,
                         p.producer_direct->x2);
    if (p.producer_structural)
        s += fmt::format("c_p = {:.17g}\nd0 = {:.17g}\nd1 = {:.17g}\n", p.producer_structural->c_p,
                         p.producer_structural->d0, p.producer_structural->d1);
    s += "\n[consumer]\n";
    if (p.consumer_direct)
        s += fmt::format("a_c = {:.17g}\nx1_c = {:.17g}\nx2_c = {:.17g}\n", p.consumer_direct->a, p.consumer_direct->x1,
                         p.consumer_direct->x2);
    if (p.consumer_structural) {
        const auto& c = *p.consumer_structural;
        s += fmt::format(
            "d0_prime = {:.17g}\nd1_prime = {:.17g}\np0 = {:.17g}\np1 = {:.17g}\nalpha = {:.17g}\nc_c = {:.17g}\n",
            c.d0_prime, c.d1_prime, c.p0, c.p1, c.alpha, c.c_c);
    }
    s += fmt::format("\n[costs]\nh_plus = {:.17g}\nh_minus = {:.17g}\nkappa0 = {:.17g}\nkappa1 = {:.17g}\n", p.h_plus,
                     p.h_minus, p.kappa0, p.kappa1);
    return s;
}

}  // namespace cpgame
