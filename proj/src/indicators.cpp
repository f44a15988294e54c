#include "chaosld/indicators.hpp"

#include <cmath>
#include <vector>

namespace chaosld {

NeighborStencil make_stencil(const Vec2& center, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("stencil sigma must be positive");
    NeighborStencil st;
    st.center = center;
    st.sigma = sigma;
    st.points[0] = center;
    st.points[1] = Vec2(center[0] + sigma, center[1]);
    st.points[2] = Vec2(center[0] - sigma, center[1]);
    st.points[3] = Vec2(center[0], center[1] + sigma);
    st.points[4] = Vec2(center[0], center[1] - sigma);
    return st;
}

std::array<Vec4, 5> embed_stencil(const SystemSpec& sys, const SectionSpec& sec,
                                  const NeighborStencil& stencil,
                                  double energy) {
    std::array<Vec4, 5> out;
    for (std::size_t i = 0; i < 5; ++i) {
        auto s = solve_constrained_momentum(sys, sec, stencil.points[i], energy);
        if (!s)
            throw StencilInfeasible("stencil point outside the allowed region");
        out[i] = *s;
    }
    return out;
}

Indicators compute_indicators(double ld_center,
                              const std::array<double, 4>& ld_neighbors,
                              double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("stencil sigma must be positive");
    if (ld_center == 0.0)
        throw DataError("degenerate stencil: center descriptor is zero");

    constexpr double n = 2.0;
    const double l0 = ld_center;
    const double qp = ld_neighbors[0], qm = ld_neighbors[1];
    const double pp = ld_neighbors[2], pm = ld_neighbors[3];

    Indicators out;
    out.d = (std::abs(l0 - qp) + std::abs(l0 - qm) + std::abs(l0 - pp) +
             std::abs(l0 - pm)) /
            (2.0 * n * l0);
    out.r = std::abs(1.0 - (qp + qm + pp + pm) / (2.0 * n * l0));
    out.c = (std::abs(qp - qm) + std::abs(pp - pm)) / (2.0 * n * sigma);
    out.s = (std::abs(qp - 2.0 * l0 + qm) + std::abs(pp - 2.0 * l0 + pm)) /
            (n * sigma * sigma);
    return out;
}

Label label_by_sali(double sali_log10_final, double threshold) {
    return sali_log10_final < threshold ? Label::Chaotic : Label::Regular;
}

double default_sali_threshold(SystemKind kind) {
    return is_map(kind) ? -13.0 : -8.0;
}

namespace {

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw DataError("degenerate abscissa in asymptote fit");
    return sxy / sxx;
}

} // namespace

double fit_sali_asymptote(const SaliSeries& series, AsymptoteKind kind) {
    // pre-floor window with positive times (the t = 0 seed is excluded;
    // a floored series ends on the floor sample, which is dropped)
    std::size_t end = series.t.size();
    if (series.floor_hit && end > 0) --end;
    std::vector<double> t, v;
    for (std::size_t i = 0; i < end; ++i) {
        if (series.t[i] > 0.0) {
            t.push_back(series.t[i]);
            v.push_back(series.log10_sali[i]);
        }
    }
    auto require_samples = [](std::size_t count) {
        if (count < 10)
            throw DataError("fewer than 10 usable samples for asymptote fit");
    };

    switch (kind) {
    case AsymptoteKind::PowerLaw: {
        require_samples(t.size());
        double t_lo = t.back() / 100.0;
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] >= t_lo) {
                lx.push_back(std::log10(t[i]));
                ly.push_back(v[i]);
            }
        }
        require_samples(lx.size());
        return ls_slope(lx, ly);
    }
    case AsymptoteKind::Exponential: {
        require_samples(t.size());
        // skip the transient: fit the second half of the usable samples
        std::size_t lo = t.size() / 2;
        std::vector<double> tx(t.begin() + lo, t.end());
        std::vector<double> ty(v.begin() + lo, v.end());
        return ls_slope(tx, ty);
    }
    case AsymptoteKind::Plateau: {
        require_samples(t.size());
        std::size_t lo = t.size() / 2;
        double sum = 0.0;
        for (std::size_t i = lo; i < v.size(); ++i) sum += v[i];
        return sum / static_cast<double>(v.size() - lo);
    }
    }
    throw ConfigError("unknown asymptote kind");
}

} // namespace chaosld
