#pragma once

// Procedural driving scenes with known action dynamics.
//
// The scene is a road of lane markings converging on a horizon plus a lead
// vehicle. Everything is drawn as a function of (x - lateral_offset), so a
// change of the offset translates the whole picture. Per step, with raw action
// (accel, steer, brake):
//
//   lateral_offset += steer_gain * steer
//   vehicle_scale   = clamp(vehicle_scale * (1 + accel_gain * accel))
//   brightness      = 1 - brake_gain * brake
//
// Actions come from a seeded AR(1) walk per component with a weak pull back
// toward the lane center and the nominal vehicle size.

#include <cstdint>
#include <span>
#include <vector>

#include "framepred/dataset.hpp"

namespace framepred {

struct RoadworldConfig {
    std::uint64_t seed = 7;
    std::uint32_t n_frames = 500;
    std::uint32_t height = 80;
    std::uint32_t width = 160;

    double horizon_row = 24.0;
    double lane_spacing = 70.0;     ///< px between markings at the bottom row
    double marking_width = 5.0;     ///< px at the bottom row
    std::uint32_t markings = 6;     ///< lane markings, symmetric about the road center
    double marking_fade_depth = 0.35;  ///< markings reach full contrast this far below the horizon (0..1)
    double vehicle_width = 30.0;    ///< px at scale 1
    double vehicle_height = 18.0;
    double vehicle_bottom = 20.0;   ///< rows below the horizon at scale 1
    double min_scale = 0.5;
    double max_scale = 2.0;

    double steer_gain = 2.0;        ///< px per unit steering
    double accel_gain = 0.05;       ///< relative size change per unit acceleration
    double brake_gain = 0.3;        ///< brightness drop per unit brake

    double noise_sigma = 0.0;

    double action_persistence = 0.9;  ///< AR(1) coefficient of the action walk
    double steer_std = 0.4;           ///< innovation std
    double accel_std = 0.4;
    double brake_std = 0.25;
    double brake_threshold = 0.2;     ///< brake = clamp(latent - threshold, 0, 1)
    double centering = 0.15;          ///< pull of the walk back toward offset 0 / scale 1
};

struct RoadworldState {
    double lateral_offset = 0.0;
    double vehicle_scale = 1.0;
    double brightness = 1.0;

    bool operator==(const RoadworldState&) const = default;
};

RoadworldState roadworld_step(const RoadworldState& state, const ActionVector& action, const RoadworldConfig& config);

/// Noise-free frame (height,width,1) of a state.
Tensor<float> render_roadworld(const RoadworldState& state, const RoadworldConfig& config);

struct RoadworldTrace {
    DrivingLog log;
    std::vector<RoadworldState> states;  ///< one per frame
};

/// Runs the dynamics under the given actions (n_frames - 1 of them) from the
/// initial state, rendering with observation noise.
RoadworldTrace simulate_roadworld(const RoadworldConfig& config, std::span<const ActionVector> actions);

/// Draws the action walk for `config.n_frames - 1` steps and simulates it.
RoadworldTrace generate_roadworld_trace(const RoadworldConfig& config);
DrivingLog generate_roadworld(const RoadworldConfig& config);

}  // namespace framepred
