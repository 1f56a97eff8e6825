#pragma once

// Independent oracles shared by the test suites. Everything here is written
// as straight-line code against the documented behavior, never in terms of
// the library's own implementation paths.

#include <psg/array.hpp>
#include <psg/mask.hpp>
#include <psg/rng.hpp>
#include <psg/tape.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Central finite differences of a scalar function with respect to one
/// parameter, element by element.
inline psg::Array finite_difference(psg::Parameter& p, const std::function<double()>& f,
                                    double h = 1e-5) {
    psg::Array grad(p.value.shape());
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
        const double theta = p.value[i];
        const double step = h * std::max(1.0, std::abs(theta));
        p.value[i] = theta + step;
        const double fp = f();
        p.value[i] = theta - step;
        const double fm = f();
        p.value[i] = theta;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

inline bool close(double a, double b, double rtol, double atol) {
    return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

inline bool all_close(const psg::Array& a, const psg::Array& b, double rtol, double atol) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (!close(a[i], b[i], rtol, atol)) return false;
    }
    return true;
}

inline psg::Array random_array(std::vector<std::size_t> shape, psg::Rng& rng, double lo = -2.0,
                               double hi = 2.0) {
    psg::Array a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

inline psg::Mask random_mask(std::size_t h, std::size_t w, psg::Rng& rng, double density = 0.5) {
    psg::Mask m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(density) ? 1 : 0;
    return m;
}

/// Maximum bipartite matching by augmenting paths over an explicit
/// compatibility matrix; the optimal-assignment reference for greedy
/// triplet matching.
class BipartiteMatcher {
public:
    BipartiteMatcher(std::size_t left, std::size_t right)
        : left_(left), compat_(left, std::vector<char>(right, 0)), match_right_(right, -1) {}

    void set_compatible(std::size_t l, std::size_t r) { compat_[l][r] = 1; }

    std::size_t max_matching() {
        std::size_t matched = 0;
        for (std::size_t l = 0; l < left_; ++l) {
            std::vector<char> visited(match_right_.size(), 0);
            if (try_augment(l, visited)) ++matched;
        }
        return matched;
    }

private:
    bool try_augment(std::size_t l, std::vector<char>& visited) {
        for (std::size_t r = 0; r < match_right_.size(); ++r) {
            if (!compat_[l][r] || visited[r]) continue;
            visited[r] = 1;
            if (match_right_[r] < 0 ||
                try_augment(static_cast<std::size_t>(match_right_[r]), visited)) {
                match_right_[r] = static_cast<int>(l);
                return true;
            }
        }
        return false;
    }

    std::size_t left_;
    std::vector<std::vector<char>> compat_;
    std::vector<int> match_right_;
};

/// IoU by direct set counting, kept separate from psg::mask_iou.
inline double direct_iou(const psg::Mask& a, const psg::Mask& b) {
    double inter = 0.0, only_a = 0.0, only_b = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] && b.data[i]) inter += 1.0;
        else if (a.data[i]) only_a += 1.0;
        else if (b.data[i]) only_b += 1.0;
    }
    const double uni = inter + only_a + only_b;
    return uni == 0.0 ? 0.0 : inter / uni;
}

} // namespace oracle
