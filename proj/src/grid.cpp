#include "ballns/grid.hpp"

namespace ballns {

MeridianGrid::MeridianGrid(int nr, int ntheta) : nr_(nr), nt_(ntheta) {
    if (nr < 4 || ntheta < 4) throw GridError("grid too coarse");
    dr_ = 1.0 / nr;
    dth_ = std::numbers::pi / ntheta;
    r_.resize(nr);
    th_.resize(ntheta);
    sin_.resize(ntheta);
    cos_.resize(ntheta);
    for (int j = 0; j < nr; ++j) r_[j] = (j + 0.5) * dr_;
    for (int k = 0; k < ntheta; ++k) {
        th_[k] = (k + 0.5) * dth_;
        sin_[k] = std::sin(th_[k]);
        cos_[k] = std::cos(th_[k]);
    }
    w_.resize(size());
    const double c = 2.0 * std::numbers::pi * dr_ * dth_;
    for (int j = 0; j < nr; ++j)
        for (int k = 0; k < ntheta; ++k) w_[idx(j, k)] = c * r_[j] * r_[j] * sin_[k];
}

std::vector<MeridianGrid::Center> MeridianGrid::centers() const {
    std::vector<Center> out;
    out.reserve(size());
    for (int j = 0; j < nr_; ++j)
        for (int k = 0; k < nt_; ++k) out.push_back({r_[j], th_[k]});
    return out;
}

MeridianGrid build_meridian_grid(int nr, int ntheta) { return MeridianGrid(nr, ntheta); }

double integrate(const ScalarField& f, const MeridianGrid& g) {
    if (!f.matches(g)) throw GridError("shape mismatch");
    auto w = g.weights();
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += f.v[i] * w[i];
    return s;
}

double inner(const ScalarField& a, const ScalarField& b, const MeridianGrid& g) {
    if (!a.matches(g) || !b.matches(g)) throw GridError("shape mismatch");
    auto w = g.weights();
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += a.v[i] * b.v[i] * w[i];
    return s;
}

double inner(const VectorField& a, const VectorField& b, const MeridianGrid& g) {
    return inner(a.r, b.r, g) + inner(a.th, b.th, g) + inner(a.ph, b.ph, g);
}

}  // namespace ballns
