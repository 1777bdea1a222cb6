#pragma once

#include <functional>

#include "bamcts/net.hpp"
#include "bamcts/rng.hpp"

namespace bamcts {

// Axis-aligned action bounds.
struct ActionBox {
    Vector low;
    Vector high;

    int dim() const { return static_cast<int>(low.size()); }
    Vector center() const { return 0.5 * (low + high); }
    Vector half_width() const { return 0.5 * (high - low); }
    Vector clip(const Vector& a) const { return a.cwiseMax(low).cwiseMin(high); }
    bool contains(const Vector& a) const {
        return a.size() == low.size() && (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
    }
    Vector sample_uniform(Rng& rng) const {
        Vector a(low.size());
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(low[i], high[i]);
        return a;
    }
    TanhSquash squash() const { return {center(), half_width()}; }

    static ActionBox symmetric(int dim, double bound) {
        return {Vector::Constant(dim, -bound), Vector::Constant(dim, bound)};
    }
};

using ActionSampler = std::function<Vector(const Vector& state, Rng& rng)>;
using ValueFn = std::function<double(const Vector& state)>;

}  // namespace bamcts
