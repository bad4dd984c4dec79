#pragma once

#include "bousfem/errors.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace bousfem {

/// Symmetric Gauss rule on the reference triangle, stored in barycentric
/// coordinates with weights summing to 1 (so integral over a triangle K is
/// |K| * sum_q w_q f(x_q)).
struct QuadratureRule {
    int order = 0; // exact for polynomials up to this total degree
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    int size() const { return static_cast<int>(weights.size()); }
};

namespace detail {

inline void push_perm3(QuadratureRule& r, double w, double a, double b) {
    // orbit of (a, b, b): three points
    r.points.push_back({a, b, b});
    r.points.push_back({b, a, b});
    r.points.push_back({b, b, a});
    r.weights.insert(r.weights.end(), 3, w);
}

inline void push_perm6(QuadratureRule& r, double w, double a, double b, double c) {
    r.points.push_back({a, b, c});
    r.points.push_back({a, c, b});
    r.points.push_back({b, a, c});
    r.points.push_back({b, c, a});
    r.points.push_back({c, a, b});
    r.points.push_back({c, b, a});
    r.weights.insert(r.weights.end(), 6, w);
}

} // namespace detail

/// Rule exact for polynomials of total degree <= order (order in [1, 8]).
/// Dunavant point sets; all weights positive.
inline const QuadratureRule& triangle_rule(int order) {
    static const auto rules = [] {
        std::array<QuadratureRule, 9> rs; // index by requested order, 0 unused

        {
            QuadratureRule r;
            r.order = 1;
            r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
            r.weights.push_back(1.0);
            rs[1] = r;
        }
        {
            QuadratureRule r;
            r.order = 2;
            detail::push_perm3(r, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 6.0);
            rs[2] = r;
        }
        {
            QuadratureRule r;
            r.order = 4;
            detail::push_perm3(r, 0.223381589678011, 0.108103018168070, 0.445948490915965);
            detail::push_perm3(r, 0.109951743655322, 0.816847572980459, 0.091576213509771);
            rs[3] = r;
            rs[4] = r;
        }
        {
            QuadratureRule r;
            r.order = 5;
            const double s15 = std::sqrt(15.0);
            r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
            r.weights.push_back(9.0 / 40.0);
            detail::push_perm3(r, (155.0 + s15) / 1200.0, (9.0 - 2.0 * s15) / 21.0,
                               (6.0 + s15) / 21.0);
            detail::push_perm3(r, (155.0 - s15) / 1200.0, (9.0 + 2.0 * s15) / 21.0,
                               (6.0 - s15) / 21.0);
            rs[5] = r;
        }
        {
            QuadratureRule r;
            r.order = 6;
            detail::push_perm3(r, 0.116786275726379, 0.501426509658179, 0.249286745170910);
            detail::push_perm3(r, 0.050844906370207, 0.873821971016996, 0.063089014491502);
            detail::push_perm6(r, 0.082851075618374, 0.053145049844816, 0.310352451033785,
                               0.636502499121399);
            rs[6] = r;
        }
        {
            QuadratureRule r;
            r.order = 8;
            r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
            r.weights.push_back(0.144315607677787);
            detail::push_perm3(r, 0.095091634413923, 0.081414823414554, 0.459292588292723);
            detail::push_perm3(r, 0.103217370534718, 0.658861384496480, 0.170569307751760);
            detail::push_perm3(r, 0.032458497623198, 0.898905543365938, 0.050547228317031);
            detail::push_perm6(r, 0.027230314174435, 0.008394777409958, 0.263112829634638,
                               0.728492392955404);
            rs[7] = r;
            rs[8] = r;
        }
        return rs;
    }();

    if (order < 1 || order > 8) {
        throw AssemblyError("triangle_rule: no tabulated rule of order " + std::to_string(order));
    }
    return rules[order];
}

/// Composite rule: apply `base` on each of the 4 midpoint sub-triangles,
/// `levels` times. Keeps the base polynomial exactness while shrinking the
/// error constant ~16x per level; used for error-norm integration of
/// non-polynomial integrands.
inline QuadratureRule refine_rule(const QuadratureRule& base, int levels = 1) {
    QuadratureRule cur = base;
    for (int l = 0; l < levels; ++l) {
        QuadratureRule next;
        next.order = cur.order;
        // sub-triangle corners in parent barycentric coordinates
        static const std::array<std::array<std::array<double, 3>, 3>, 4> subs = {{
            {{{1.0, 0.0, 0.0}, {0.5, 0.5, 0.0}, {0.5, 0.0, 0.5}}},
            {{{0.5, 0.5, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.5, 0.5}}},
            {{{0.5, 0.0, 0.5}, {0.0, 0.5, 0.5}, {0.0, 0.0, 1.0}}},
            {{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}}},
        }};
        for (const auto& sub : subs) {
            for (int q = 0; q < cur.size(); ++q) {
                const auto& lam = cur.points[q];
                std::array<double, 3> p{};
                for (int c = 0; c < 3; ++c) {
                    p[c] = lam[0] * sub[0][c] + lam[1] * sub[1][c] + lam[2] * sub[2][c];
                }
                next.points.push_back(p);
                next.weights.push_back(0.25 * cur.weights[q]);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace bousfem
