#include "framepred/roadworld.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace framepred {

namespace {

// Length of [a0,a1] ∩ [b0,b1], or 0.
double overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

class Gaussian {
   public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
        const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

   private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ull;

}  // namespace

RoadworldState roadworld_step(const RoadworldState& state, const ActionVector& action, const RoadworldConfig& config) {
    RoadworldState next;
    next.lateral_offset = state.lateral_offset + config.steer_gain * static_cast<double>(action[1]);
    next.vehicle_scale = std::clamp(state.vehicle_scale * (1.0 + config.accel_gain * static_cast<double>(action[0])),
                                    config.min_scale, config.max_scale);
    next.brightness = 1.0 - config.brake_gain * static_cast<double>(action[2]);
    return next;
}

Tensor<float> render_roadworld(const RoadworldState& state, const RoadworldConfig& c) {
    const std::size_t h_n = c.height, w_n = c.width;
    Tensor<float> frame({h_n, w_n, 1});

    const double center = 0.5 * double(w_n) + state.lateral_offset;
    const double s = state.vehicle_scale;
    const double car_x0 = center - 0.5 * c.vehicle_width * s, car_x1 = center + 0.5 * c.vehicle_width * s;
    const double car_y1 = c.horizon_row + c.vehicle_bottom * s, car_y0 = car_y1 - c.vehicle_height * s;
    const double light_w = 0.2 * c.vehicle_width * s, light_h = 0.25 * c.vehicle_height * s;
    const double light_inset = 0.1 * c.vehicle_width * s;
    const double light_y1 = car_y1 - 0.15 * c.vehicle_height * s, light_y0 = light_y1 - light_h;

    for (std::size_t y = 0; y < h_n; ++y) {
        const double yc = double(y) + 0.5;
        const bool road = yc >= c.horizon_row;
        const double depth = road ? (yc - c.horizon_row) / (double(h_n) - c.horizon_row) : 0.0;
        const double spacing = c.lane_spacing * depth;
        const double half_marking = 0.5 * c.marking_width * depth + 0.25;
        const double car_cov_y = overlap(double(y), double(y) + 1.0, car_y0, car_y1);
        const double light_cov_y = overlap(double(y), double(y) + 1.0, light_y0, light_y1);

        for (std::size_t x = 0; x < w_n; ++x) {
            const double x0 = double(x), x1 = double(x) + 1.0;
            double v;
            if (!road) {
                v = 0.85 - 0.25 * (yc / c.horizon_row);
            } else {
                v = 0.30 + 0.08 * depth;
                // Markings sit at center + (k + 1/2) * spacing for |k + 1/2| <= markings/2
                // and fade out toward the horizon, where they would alias.
                const double rel = (x0 + 0.5 - center) / spacing - 0.5;
                const double k_near = std::round(rel);
                const double half_count = 0.5 * double(c.markings);
                double cov = 0.0;
                for (double k = k_near - 1.0; k <= k_near + 1.0; k += 1.0) {
                    if (std::abs(k + 0.5) > half_count) continue;
                    const double m = center + (k + 0.5) * spacing;
                    cov += overlap(x0, x1, m - half_marking, m + half_marking);
                }
                const double fade = std::clamp(depth / c.marking_fade_depth, 0.0, 1.0);
                v += (0.9 - v) * std::min(cov, 1.0) * fade * fade * (3.0 - 2.0 * fade);
            }
            const double car_cov = car_cov_y * overlap(x0, x1, car_x0, car_x1);
            v += (0.1 - v) * car_cov;
            const double light_cov = light_cov_y * (overlap(x0, x1, car_x0 + light_inset, car_x0 + light_inset + light_w) +
                                                    overlap(x0, x1, car_x1 - light_inset - light_w, car_x1 - light_inset));
            v += (0.95 - v) * light_cov;
            frame[y * w_n + x] = static_cast<float>(std::clamp(v * state.brightness, 0.0, 1.0));
        }
    }
    return frame;
}

RoadworldTrace simulate_roadworld(const RoadworldConfig& config, std::span<const ActionVector> actions) {
    if (config.n_frames == 0) throw std::invalid_argument("roadworld: n_frames must be positive");
    if (actions.size() + 1 != config.n_frames) {
        throw std::invalid_argument("roadworld: " + std::to_string(config.n_frames) + " frames need " +
                                    std::to_string(config.n_frames - 1) + " actions, got " +
                                    std::to_string(actions.size()));
    }
    RoadworldTrace trace;
    trace.log.height = config.height;
    trace.log.width = config.width;
    trace.log.actions.assign(actions.begin(), actions.end());
    Gaussian noise(config.seed ^ kNoiseStream);
    RoadworldState state;
    for (std::uint32_t i = 0; i < config.n_frames; ++i) {
        if (i > 0) state = roadworld_step(state, actions[i - 1], config);
        Tensor<float> frame = render_roadworld(state, config);
        if (config.noise_sigma > 0.0) {
            for (auto& v : frame.data())
                v = static_cast<float>(std::clamp(double(v) + config.noise_sigma * noise(), 0.0, 1.0));
        }
        trace.states.push_back(state);
        trace.log.frames.push_back(std::move(frame));
    }
    return trace;
}

RoadworldTrace generate_roadworld_trace(const RoadworldConfig& config) {
    if (config.n_frames == 0) throw std::invalid_argument("roadworld: n_frames must be positive");
    Gaussian walk(config.seed);
    std::vector<ActionVector> actions;
    actions.reserve(config.n_frames - 1);
    double z_accel = 0.0, z_steer = 0.0, z_brake = 0.0;
    RoadworldState state;
    const double rho = config.action_persistence;
    for (std::uint32_t i = 0; i + 1 < config.n_frames; ++i) {
        z_accel = rho * z_accel + config.accel_std * walk();
        z_steer = rho * z_steer + config.steer_std * walk();
        z_brake = rho * z_brake + config.brake_std * walk();
        const double steer_pull = config.steer_gain > 0 ? config.centering * state.lateral_offset / config.steer_gain : 0.0;
        const double accel_pull = config.accel_gain > 0 ? config.centering * std::log(state.vehicle_scale) / config.accel_gain : 0.0;
        ActionVector a{static_cast<float>(z_accel - accel_pull), static_cast<float>(z_steer - steer_pull),
                       static_cast<float>(std::clamp(z_brake - config.brake_threshold, 0.0, 1.0))};
        actions.push_back(a);
        state = roadworld_step(state, a, config);
    }
    return simulate_roadworld(config, actions);
}

DrivingLog generate_roadworld(const RoadworldConfig& config) { return generate_roadworld_trace(config).log; }

}  // namespace framepred
