#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ballns {

struct GridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cell-centred (r, theta) grid on the meridian half-disk of the unit ball.
// Index layout is theta-fastest: idx = j * ntheta + k.
class MeridianGrid {
public:
    MeridianGrid(int nr, int ntheta);

    int nr() const { return nr_; }
    int ntheta() const { return nt_; }
    std::size_t size() const { return static_cast<std::size_t>(nr_) * nt_; }
    double dr() const { return dr_; }
    double dtheta() const { return dth_; }

    double r(int j) const { return r_[j]; }
    double theta(int k) const { return th_[k]; }
    double sin_theta(int k) const { return sin_[k]; }
    double cos_theta(int k) const { return cos_[k]; }
    double r_face(int j) const { return j * dr_; }
    double theta_face(int k) const { return k * dth_; }

    std::size_t idx(int j, int k) const { return static_cast<std::size_t>(j) * nt_ + k; }
    double weight(int j, int k) const { return w_[idx(j, k)]; }
    std::span<const double> weights() const { return w_; }

    struct Center {
        double r, theta;
    };
    std::vector<Center> centers() const;

    bool operator==(const MeridianGrid& o) const { return nr_ == o.nr_ && nt_ == o.nt_; }

private:
    int nr_, nt_;
    double dr_, dth_;
    std::vector<double> r_, th_, sin_, cos_, w_;
};

MeridianGrid build_meridian_grid(int nr, int ntheta);

// Axisymmetric scalar samples, one per cell.
struct ScalarField {
    int nr = 0, nt = 0;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const MeridianGrid& g, double fill = 0.0)
        : nr(g.nr()), nt(g.ntheta()), v(g.size(), fill) {}

    double& operator()(int j, int k) { return v[static_cast<std::size_t>(j) * nt + k]; }
    double operator()(int j, int k) const { return v[static_cast<std::size_t>(j) * nt + k]; }
    std::size_t size() const { return v.size(); }
    bool matches(const MeridianGrid& g) const { return nr == g.nr() && nt == g.ntheta() && v.size() == g.size(); }
    bool operator==(const ScalarField&) const = default;
};

// Axisymmetric vector field in spherical components (u_r, u_theta, u_phi).
struct VectorField {
    ScalarField r, th, ph;

    VectorField() = default;
    explicit VectorField(const MeridianGrid& g) : r(g), th(g), ph(g) {}
    bool matches(const MeridianGrid& g) const { return r.matches(g) && th.matches(g) && ph.matches(g); }
    bool operator==(const VectorField&) const = default;
};

template <class F>
ScalarField sample(const MeridianGrid& g, F&& f) {
    ScalarField out(g);
    for (int j = 0; j < g.nr(); ++j)
        for (int k = 0; k < g.ntheta(); ++k) out(j, k) = f(g.r(j), g.theta(k));
    return out;
}

double integrate(const ScalarField& f, const MeridianGrid& g);

// Pointwise products used by quadrature helpers.
double inner(const ScalarField& a, const ScalarField& b, const MeridianGrid& g);
double inner(const VectorField& a, const VectorField& b, const MeridianGrid& g);

}  // namespace ballns
