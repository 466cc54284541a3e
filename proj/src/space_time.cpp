#include "ktl/space_time.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ktl/errors.hpp"

namespace ktl {

Schedule Schedule::constant(double c) {
    Schedule s;
    s.t = {0.0};
    s.v = {c};
    return s;
}

void Schedule::validate() const {
    if (t.empty() || t.size() != v.size()) throw InputError("schedule: times and values must be non-empty and equal length");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(v[i])) throw InputError("schedule: non-finite entry");
        if (i > 0 && !(t[i] > t[i - 1])) throw InputError("schedule: times must be strictly increasing");
    }
}

double Schedule::operator()(double time) const {
    if (time <= t.front()) return v.front();
    if (time >= t.back()) return v.back();
    auto it = std::upper_bound(t.begin(), t.end(), time);
    const std::size_t j = static_cast<std::size_t>(it - t.begin());
    const double w = (time - t[j - 1]) / (t[j] - t[j - 1]);
    return (1.0 - w) * v[j - 1] + w * v[j];
}

bool Schedule::is_constant() const {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double profile_value(Profile p, double t, double T) {
    switch (p) {
        case Profile::constant: return 1.0;
        case Profile::linear: return t / T;
        case Profile::half_sine: return std::sin(std::numbers::pi * t / T);
        case Profile::bump: {
            const double s = std::sin(std::numbers::pi * t / T);
            return s * s;
        }
    }
    return 0.0;
}

std::string to_string(Profile p) {
    switch (p) {
        case Profile::constant: return "constant";
        case Profile::linear: return "linear";
        case Profile::half_sine: return "half_sine";
        case Profile::bump: return "bump";
    }
    return "?";
}

Profile profile_from_string(const std::string& s) {
    if (s == "constant") return Profile::constant;
    if (s == "linear") return Profile::linear;
    if (s == "half_sine") return Profile::half_sine;
    if (s == "bump") return Profile::bump;
    throw InputError("unknown time profile '" + s + "'");
}

SpaceTimeField SpaceTimeField::stationary(const VectorField& F) {
    SpaceTimeField s(F.grid);
    s.add(F, nullptr);
    return s;
}

void SpaceTimeField::add(const VectorField& F, std::function<double(double)> s) {
    F.validate();
    if (terms.empty()) grid = F.grid;
    if (F.grid != grid) throw InputError("space-time field: term grid differs");
    terms.push_back({std::move(s), F});
}

bool SpaceTimeField::time_dependent() const {
    return std::any_of(terms.begin(), terms.end(), [](const Term& t) { return static_cast<bool>(t.s); });
}

VectorField SpaceTimeField::at(double t) const {
    VectorField out(grid);
    if (terms.empty()) return out;
    std::vector<std::vector<double>> buf;
    eval_into(t, buf);
    for (int a = 0; a < grid.d; ++a) out.comp[a] = ScalarField::from_values(grid, buf[a]);
    return out;
}

void SpaceTimeField::eval_into(double t, std::vector<std::vector<double>>& out) const {
    const std::size_t n = grid.size();
    out.resize(grid.d);
    for (auto& o : out) o.assign(n, 0.0);
    for (const auto& term : terms) {
        const double s = term.s ? term.s(t) : 1.0;
        if (s == 0.0) continue;
        for (int a = 0; a < grid.d; ++a) {
            const auto& v = term.F.comp[a].values();
            auto& o = out[a];
            for (std::size_t i = 0; i < n; ++i) o[i] += s * v[i];
        }
    }
}

double SpaceTimeField::div_linf_integral(double T, int samples) const {
    if (terms.empty()) return 0.0;
    std::vector<std::vector<double>> divs;
    for (const auto& term : terms) divs.push_back(divergence(term.F).values());
    const std::size_t n = grid.size();
    const int m = time_dependent() ? samples : 1;
    const double h = T / m;
    std::vector<double> acc(n);
    double total = 0.0;
    for (int k = 0; k < m; ++k) {
        const double t = (k + 0.5) * h;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < terms.size(); ++j) {
            const double s = terms[j].s ? terms[j].s(t) : 1.0;
            for (std::size_t i = 0; i < n; ++i) acc[i] += s * divs[j][i];
        }
        double mx = 0.0;
        for (double x : acc) mx = std::max(mx, std::abs(x));
        total += mx * h;
    }
    return total;
}

double SpaceTimeField::max_speed(double T, int samples) const {
    if (terms.empty()) return 0.0;
    const int m = time_dependent() ? samples : 1;
    std::vector<std::vector<double>> buf;
    double best = 0.0;
    for (int k = 0; k <= m; ++k) {
        eval_into(T * k / m, buf);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double s = 0.0;
            for (int a = 0; a < grid.d; ++a) s += buf[a][i] * buf[a][i];
            best = std::max(best, std::sqrt(s));
        }
    }
    return best;
}

SpaceTimeField SpaceTimeField::plus(const SpaceTimeField& o) const {
    if (terms.empty()) return o;
    if (o.terms.empty()) return *this;
    if (grid != o.grid) throw InputError("space-time field sum: grids differ");
    SpaceTimeField out = *this;
    for (const auto& t : o.terms) out.terms.push_back(t);
    return out;
}

} // namespace ktl
