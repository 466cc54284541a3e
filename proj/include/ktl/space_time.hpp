#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ktl/field.hpp"

namespace ktl {

/// Piecewise-linear schedule through (t_i, v_i), held constant outside.
struct Schedule {
    std::vector<double> t{0.0};
    std::vector<double> v{1.0};

    static Schedule constant(double c = 1.0);
    double operator()(double time) const;
    bool is_constant() const;
    void validate() const;
};

enum class Profile { constant, linear, half_sine, bump };

/// Time profiles on [0,T]: 1, t/T, sin(pi t/T), sin^2(pi t/T).
double profile_value(Profile p, double t, double T);
std::string to_string(Profile p);
Profile profile_from_string(const std::string& s);

/// Separable space-time field sum_i s_i(t) F_i(x).
struct SpaceTimeField {
    struct Term {
        std::function<double(double)> s;
        VectorField F;
    };

    Grid grid;
    std::vector<Term> terms;

    SpaceTimeField() = default;
    explicit SpaceTimeField(const Grid& g) : grid(g) {}
    static SpaceTimeField stationary(const VectorField& F);

    void add(const VectorField& F, std::function<double(double)> s);
    bool empty() const { return terms.empty(); }
    bool time_dependent() const;
    VectorField at(double t) const;
    /// Physical values at time t into out[a] (d arrays of grid size).
    void eval_into(double t, std::vector<std::vector<double>>& out) const;
    /// Integral over [0,T] of the grid max of |div|, by midpoint quadrature.
    double div_linf_integral(double T, int samples = 256) const;
    /// max over sampled times of the grid max of |field|.
    double max_speed(double T, int samples = 64) const;
    SpaceTimeField plus(const SpaceTimeField& o) const;
};

/// Samples of a time-indexed vector field.
struct TimeSlices {
    std::vector<double> t;
    std::vector<VectorField> g;
};

} // namespace ktl
