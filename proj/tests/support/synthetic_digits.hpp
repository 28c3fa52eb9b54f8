// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Procedural 28x28 grayscale "glyph" images in IDX form, used where a
// ten-class, MNIST-sized dataset is needed without network access.
// Each class is a fixed set of random strokes; each example jitters the
// stroke endpoints, shifts the glyph, varies ink intensity and adds
// background noise.

#ifndef TICKETLAB_TESTS_SYNTHETIC_DIGITS_HPP
#define TICKETLAB_TESTS_SYNTHETIC_DIGITS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ticketlab/data.hpp"
#include "ticketlab/random.hpp"

namespace ticketlab::testing {

struct GlyphOptions {
    std::size_t classes = 10;
    std::size_t strokes = 3;
    double jitter = 2.0;      // endpoint jitter in pixels
    int max_shift = 2;        // whole-glyph shift in pixels
    double noise = 0.15;      // probability of a background speck
    std::uint64_t class_seed = 1234;
};

inline std::pair<ticketlab::IdxArray, ticketlab::IdxArray> make_glyph_idx(std::size_t count, std::uint64_t seed,
                                                                          const GlyphOptions& opt = {}) {
    constexpr int S = 28;
    struct Stroke {
        double x0, y0, x1, y1;
    };
    ticketlab::Rng class_rng(opt.class_seed);
    std::vector<std::vector<Stroke>> protos(opt.classes);
    for (auto& strokes : protos) {
        for (std::size_t s = 0; s < opt.strokes; ++s) {
            strokes.push_back({class_rng.uniform(6, 22), class_rng.uniform(6, 22), class_rng.uniform(6, 22),
                               class_rng.uniform(6, 22)});
        }
    }

    ticketlab::Rng rng(seed);
    ticketlab::IdxArray images{{count, S, S}, std::vector<std::uint8_t>(count * S * S, 0)};
    ticketlab::IdxArray labels{{count}, std::vector<std::uint8_t>(count, 0)};
    std::vector<double> canvas(S * S);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t label = rng.below(opt.classes);
        labels.data[n] = static_cast<std::uint8_t>(label);
        std::fill(canvas.begin(), canvas.end(), 0.0);
        const double dx = static_cast<double>(static_cast<int>(rng.below(2 * opt.max_shift + 1)) - opt.max_shift);
        const double dy = static_cast<double>(static_cast<int>(rng.below(2 * opt.max_shift + 1)) - opt.max_shift);
        const double ink = rng.uniform(0.6, 1.0);
        for (const Stroke& st : protos[label]) {
            const double x0 = st.x0 + dx + opt.jitter * rng.normal(), y0 = st.y0 + dy + opt.jitter * rng.normal();
            const double x1 = st.x1 + dx + opt.jitter * rng.normal(), y1 = st.y1 + dy + opt.jitter * rng.normal();
            const int steps = 40;
            for (int k = 0; k <= steps; ++k) {
                const double t = static_cast<double>(k) / steps;
                const double x = x0 + t * (x1 - x0), y = y0 + t * (y1 - y0);
                for (int py = static_cast<int>(y) - 1; py <= static_cast<int>(y) + 2; ++py) {
                    for (int px = static_cast<int>(x) - 1; px <= static_cast<int>(x) + 2; ++px) {
                        if (px < 0 || py < 0 || px >= S || py >= S) continue;
                        const double d2 = (px - x) * (px - x) + (py - y) * (py - y);
                        canvas[py * S + px] = std::max(canvas[py * S + px], ink * std::exp(-d2 / 1.2));
                    }
                }
            }
        }
        for (double& v : canvas) {
            if (rng.uniform() < opt.noise) v = std::max(v, rng.uniform(0.0, 0.8));
        }
        for (int i = 0; i < S * S; ++i) {
            images.data[n * S * S + i] = static_cast<std::uint8_t>(std::lround(std::clamp(canvas[i], 0.0, 1.0) * 255));
        }
    }
    return {std::move(images), std::move(labels)};
}

}  // namespace ticketlab::testing

#endif  // TICKETLAB_TESTS_SYNTHETIC_DIGITS_HPP
