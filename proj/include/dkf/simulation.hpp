#pragma once

#include "dkf/core_model.hpp"
#include "dkf/rng.hpp"

#include <vector>

namespace dkf {

/// One ground-truth realization on k = 0..K. Observations exist for k >= 1;
/// index 0 of `y` and `b` is left empty.
struct Trajectory {
    std::vector<Vec> x;
    std::vector<Vec> f;
    std::vector<std::vector<Vec>> y;
    std::vector<std::vector<Vec>> b;
    std::vector<Vec> b0;

    [[nodiscard]] int horizon() const { return static_cast<int>(x.size()) - 1; }
};

/// Draw order: x0, then b0 per sensor, then per step the process noise
/// followed by each sensor's observation noise.
inline Trajectory simulate_truth(const SystemModel& model, int horizon, const Vec& x0_mean, const Mat& x0_cov,
                                 Rng& rng) {
    if (horizon < 0) {
        throw ValidationError("horizon must be nonnegative");
    }
    const int N = model.sensors();
    Trajectory t;
    t.x.reserve(static_cast<std::size_t>(horizon) + 1);
    t.f.reserve(static_cast<std::size_t>(horizon) + 1);
    t.y.resize(static_cast<std::size_t>(horizon) + 1);
    t.b.resize(static_cast<std::size_t>(horizon) + 1);

    t.x.push_back(x0_mean + gaussian(x0_cov, rng));
    for (int i = 0; i < N; ++i) {
        t.b0.push_back(model.initial_bias(i, rng));
    }
    for (int k = 0; k < horizon; ++k) {
        const Vec& x = t.x.back();
        Vec f = model.p > 0 ? model.f(x, k) : Vec(0);
        Vec next = model.A_bar(k) * x + model.process_noise(k, rng);
        if (model.p > 0) {
            next += model.G_bar(k) * f;
        }
        t.f.push_back(std::move(f));
        t.x.push_back(std::move(next));

        const int kn = k + 1;
        auto& ys = t.y[static_cast<std::size_t>(kn)];
        auto& bs = t.b[static_cast<std::size_t>(kn)];
        const Vec& xn = t.x.back();
        for (int i = 0; i < N; ++i) {
            Vec b = model.bias(xn, kn, i, t.b0[static_cast<std::size_t>(i)]);
            ys.push_back(model.H_bar(kn, i) * xn + b + model.observation_noise(kn, i, rng));
            bs.push_back(std::move(b));
        }
    }
    t.f.push_back(model.p > 0 ? model.f(t.x.back(), horizon) : Vec(0));
    return t;
}

}  // namespace dkf
