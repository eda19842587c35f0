#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evoact/backbone.hpp"
#include "evoact/rng.hpp"

namespace evoact {

enum class Task { Reach, Push, PickPlace };

Task task_from_string(const std::string& s);
std::string to_string(Task t);

// Instruction vocabulary layout (toy vocab of 64 ids).
inline constexpr int kTokenBos = 0;
inline constexpr int kTokenImg = 1;
inline constexpr int kTokenTaskBase = 2;   // 2=reach, 3=push, 4=pickplace
inline constexpr int kTokenColorBase = 8;  // 8..13 map to palette entries

inline constexpr int kPaletteSize = 6;
// RGB palette rows (red, green, blue, yellow, magenta, cyan).
extern const float kPalette[kPaletteSize][3];

struct EnvParams {
    int image_size = 32;
    int views = 2;           // view 0: global, view 1: agent-centered crop
    int max_steps = 60;      // episode horizon T_max
    int distractors = 1;
    float min_separation = 0.15f;
    float move_scale = 0.05f;
    float grasp_dist = 0.05f;
    float success_dist = 0.05f;
    // World size of the agent-centered crop. Wide enough that goal objects
    // stay visible in the egocentric frame from anywhere in the workspace.
    float agent_window = 1.2f;
};

struct EnvObject {
    float x = 0, y = 0;
    int color = 0;
};

struct EnvState {
    Task task = Task::Reach;
    float agent_x = 0, agent_y = 0;
    float gripper = 1;  // 1 = open, 0 = closed
    bool held = false;
    int held_index = -1;
    std::vector<EnvObject> objects;
    int target_index = 0;
    int goal_color = 0;
    int zone_color = 0;
    float zone_x = 0, zone_y = 0;
    int step_count = 0;
    bool done = false;
    bool success = false;
};

struct RobotState {
    std::vector<float> values;  // x, y, gripper, held-flag
};

struct StepOutcome {
    ObservationSet obs;
    bool done = false;
    bool success = false;
};

// Pure renderer: anti-aliased discs over a dark background; identical state
// yields identical pixels.
ObservationSet render_views(const EnvState& s, const EnvParams& p);
std::vector<float> render_view(const EnvState& s, const EnvParams& p, int view);

class ToyEnv {
public:
    ToyEnv(Task task, std::uint64_t seed, EnvParams params = {});

    void reset(std::uint64_t seed);
    const EnvState& state() const { return state_; }
    const EnvParams& params() const { return params_; }
    ObservationSet observe() const { return render_views(state_, params_); }
    Instruction instruction() const;
    RobotState robot_state() const;

    // Clips the action to [-1,1]^3, advances dynamics, evaluates the task
    // predicate. Throws if called after the episode finished.
    StepOutcome step(const std::array<float, 3>& action);

private:
    Task task_;
    EnvParams params_;
    EnvState state_;
};

// Proportional scripted controller toward the current subgoal; outputs
// always within [-1, 1].
std::array<float, 3> expert_action(const EnvState& s, const EnvParams& p);

// A policy maps the current observation to a chunk of H actions.
using PolicyFn =
    std::function<std::vector<std::array<float, 3>>(const ObservationSet&, const Instruction&, const RobotState&)>;

struct EpisodeLog {
    std::uint64_t seed = 0;
    int steps = 0;
    bool success = false;
};

struct EvalResult {
    double success_rate = 0;
    int trials = 0;
    std::vector<EpisodeLog> episodes;
};

// Closed-loop evaluation: predict a chunk, execute `replan_every` of its
// actions (all H by default), replan; success rate over seeded trials.
EvalResult evaluate_policy(Task task, int trials, std::uint64_t seed, const PolicyFn& policy, int horizon,
                           int replan_every = 0, const EnvParams& params = {});

}  // namespace evoact
