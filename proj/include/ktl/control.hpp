#pragma once

#include <string>
#include <vector>

#include "ktl/noise.hpp"
#include "ktl/space_time.hpp"

namespace ktl {

/// amplitude * profile(t) times a fixed coefficient vector over the noise
/// basis. With a unit coefficient vector the cost of the atom is
/// (1/2) amplitude^2 int profile^2 dt.
struct ControlAtom {
    std::vector<double> v;
    Profile profile = Profile::constant;
    double amplitude = 0.0;
    std::string label;
};

/// Control g(t,x) = sum_j h_j(t) sigma_j(x) in the span of the noise basis,
/// stored through its coefficients h(t).
struct Control {
    std::vector<ControlAtom> atoms;
    double T = 1.0;

    bool empty() const;
    /// h(t) into out (resized to the basis size n).
    void coefficients(double t, std::size_t n, std::vector<double>& out) const;
    /// (1/2) int_0^T |h(t)|^2 dt: the exact Cameron-Martin cost of g.
    double cost() const;
    /// Field representation on a grid, one term per atom.
    SpaceTimeField as_field(const NoiseBasis& basis, const Grid& grid) const;
    Control scaled(double s) const;
};

/// Minimal-norm unit coefficient vector for the field sqrt(2) theta_k e cos(k.x)
/// (or sin); the basis carries both k and -k, which span the same field.
std::vector<double> unit_mode_control(const NoiseBasis& basis, const Index3& k, int pol, bool sine);

/// Finite control family: spatial elements x time profiles.
struct ControlDictionary {
    std::vector<std::vector<double>> spatial;
    std::vector<std::string> labels;
    std::vector<Profile> profiles;
    double T = 1.0;
    double budget = 1e300;  ///< bound on (1/2)||g||^2

    std::size_t dim() const { return spatial.size() * profiles.size(); }
    Control make(const std::vector<double>& theta) const;
};

/// Up to n_spatial low modes (cos phase, lexicographic in |k|) with the
/// requested profiles.
ControlDictionary default_dictionary(const NoiseBasis& basis, int n_spatial, const std::vector<Profile>& profiles,
                                     double T, double budget);

} // namespace ktl
