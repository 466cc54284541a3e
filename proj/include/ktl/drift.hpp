#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktl/field.hpp"
#include "ktl/space_time.hpp"

namespace ktl {

enum class DriftKind { zero, constant, shear, cellular, rough, compressible, user };

std::string to_string(DriftKind k);
DriftKind drift_kind_from_string(const std::string& s);

struct DriftSpec {
    DriftKind kind = DriftKind::zero;
    std::vector<double> velocity;  ///< constant kind
    double amplitude = 1.0;
    int wavenumber = 1;
    double q_target = 1.5;         ///< rough kind
    double slope = -1.0;           ///< rough kind; negative selects the marginal H^beta slope
    std::uint64_t seed = 0;        ///< rough kind
    std::string file;              ///< user kind: components at <file>_<a>.{bin,json}
    bool modulated = false;
    Schedule schedule;

    void validate() const;
};

struct DriftInfo {
    double q = 2.0;
    double w1q_norm = 0.0;
    double div_linf = 0.0;
    double l2_norm = 0.0;
    double spectral_slope = 0.0;
};

struct Drift {
    VectorField field;    ///< spatial profile
    SpaceTimeField st;    ///< with time dependence applied
    DriftInfo info;
};

Drift synthesize_drift(const DriftSpec& spec, const Grid& grid);

/// Gaussian filter exp(-delta^2 |xi|^2 / 2) on every component.
VectorField mollify(const VectorField& b, double delta);
SpaceTimeField mollify(const SpaceTimeField& b, double delta);

/// W^{1,q} norm by quadrature: ||b||_{L^q} + ||grad b||_{L^q}.
double w1q_norm(const VectorField& b, double q);

struct RegimeReport {
    bool dl_unique = false;
    bool nonunique_weak = false;
    bool noise_wellposed = false;
    double margin_dl = 0.0;        ///< 1 - 1/p - 1/q, true iff >= 0
    double margin_nonunique = 0.0; ///< (d-1)/(dp) + 1/q - 1, true iff > 0
    double margin_noise = 0.0;     ///< min(q - d/(2(1-alpha)), 2 - q)
    std::vector<std::string> unchecked;
};

RegimeReport check_regime(double p, double q, int d, double alpha);

} // namespace ktl
