#pragma once

// Central finite-difference harness shared by the gradient tests. Losses
// are re-evaluated from scratch per probe, so the check covers everything
// between the parameters and the scalar, batch statistics included.
//
// The scalar type is the caller's choice: double is fine for most nets,
// but checks whose max error is dominated by evaluation roundoff (noise
// ~ ulp(loss)/2h against near-zero gradients) should instantiate the net
// with long double instead of loosening the tolerance.

#include <algorithm>
#include <cmath>
#include <vector>

#include "refinegan/layers.hpp"

namespace gradcheck {

struct Result {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

/// eval(want_grad): returns the scalar loss; when want_grad is true it must
/// also leave fresh analytic gradients in the referenced parameters.
template <class S, class F>
inline Result check(std::vector<refinegan::ParamRef<S>> params, const F& eval,
                    std::size_t samples, refinegan::Rng& rng, double step = 1e-5) {
    eval(true);
    std::vector<std::vector<S>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.grad, p.grad + p.count);

    std::size_t total = 0;
    for (const auto& p : params) total += p.count;

    Result res;
    for (std::size_t s = 0; s < samples; ++s) {
        std::size_t gi = refinegan::rand_index(rng, total);
        std::size_t ti = 0;
        while (gi >= params[ti].count) {
            gi -= params[ti].count;
            ++ti;
        }
        S* slot = params[ti].value + gi;
        const S orig = *slot;
        *slot = orig + S(step);
        const S lp = eval(false);
        *slot = orig - S(step);
        const S lm = eval(false);
        *slot = orig;
        const S fd = (lp - lm) / (S(2) * S(step));
        const S an = grads[ti][gi];
        const S denom = std::max({std::abs(fd), std::abs(an), S(1e-7)});
        res.max_rel = std::max(res.max_rel, double(std::abs(fd - an) / denom));
        ++res.checked;
    }
    return res;
}

}  // namespace gradcheck
