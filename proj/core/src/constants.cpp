#include <cmath>
#include <sstream>

#include "mfgdelay/fixpoint.hpp"

namespace mfgdelay {

double belief_lipschitz(int d0, double L_p) {
    double s = 1.0;  // d = 0 term, 0^0 = 1
    for (int d = 1; d <= d0; ++d) s += std::pow(d * L_p, d);
    return s;
}

ConstantsReport contraction_constants(const ModelSpec& model, std::optional<double> zeta,
                                      std::optional<double> eta_star) {
    const auto lc = lipschitz_constants(model);
    const double g = model.gamma;
    ConstantsReport r;
    r.L_p = lc.L_p;
    r.L_r = lc.L_r;
    r.M_r = lc.M_r;
    r.M_R = lc.M_R;
    r.L_P = model.d_max() * lc.L_p;
    r.L_R = lc.L_r + 2.0 * lc.M_r * r.L_P;
    r.L_M = belief_lipschitz(model.d_max(), lc.L_p);
    r.q_star = lc.M_R / (1.0 - g);
    r.zeta_min = 2.0 * r.L_P * r.L_M + 2.0;
    if (zeta) {
        if (!(*zeta > r.zeta_min)) {
            std::ostringstream msg;
            msg << "zeta = " << *zeta << " must exceed zeta_min = " << r.zeta_min;
            throw ConfigError(msg.str());
        }
        r.zeta = *zeta;
    } else {
        r.zeta = std::ceil(r.zeta_min) + 1.0;
    }
    r.eta_star_floor = 2.0 * lc.M_R / (-(1.0 - g) * std::log(g));
    if (eta_star) {
        if (!(*eta_star > r.eta_star_floor)) {
            std::ostringstream msg;
            msg << "eta_star = " << *eta_star << " must exceed " << r.eta_star_floor;
            throw ConfigError(msg.str());
        }
        r.eta_star = *eta_star;
    } else {
        r.eta_star = 1.01 * r.eta_star_floor;
    }
    const double expo = r.q_star > 0.0 ? std::exp(2.0 * r.q_star / r.eta_star) : 1.0;
    r.l_eta_star = r.L_M * (r.L_R + 2.0 * g * r.q_star * r.L_P) / (1.0 - g * expo);
    const double c = 2.0 * r.L_P * r.L_M;
    r.L_Psi = 2.0 * r.L_P / (c + 1.0) * (r.zeta / (r.zeta - c - 2.0) + 1.0 / (r.zeta - 1.0));
    r.eta_threshold = std::sqrt(2.0 * r.q_star * r.l_eta_star * r.L_Psi);
    r.eta_contractive = std::max(r.eta_star, r.eta_threshold);
    return r;
}

}  // namespace mfgdelay
