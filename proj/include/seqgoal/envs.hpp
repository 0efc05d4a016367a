#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqgoal/errors.hpp"
#include "seqgoal/geometry.hpp"
#include "seqgoal/rng.hpp"

namespace seqgoal {

using json = nlohmann::json;

// Everything the harness needs to know about an environment, loaded from a
// versioned config file whose bytes are hashed into run metadata.
struct EnvSpec {
    std::string name;
    int state_dim = 0;
    int action_dim = 0;
    int goal_dim = 0;
    double goal_threshold = 0.0;
    bool terminal_on_goal = false;  // mazes end on goal attainment, cartpole never does
    bool relative_goals = false;    // cartpole observes goals as residuals
    int episode_budget = 0;
    std::vector<Eigen::VectorXd> eval_goals;  // absolute goal coordinates
    Eigen::VectorXd eval_start;
    json physics;
    MazeGeometry geometry;
    int version = 0;
    std::uint64_t config_hash = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline EnvSpec load_env_spec(const std::string& path) {
    const std::string bytes = read_file(path);
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::exception& e) {
        throw ConfigError("env config parse error in " + path + ": " + e.what());
    }
    EnvSpec spec;
    try {
        spec.name = j.at("env").get<std::string>();
        spec.version = j.at("version").get<int>();
        spec.state_dim = j.at("state_dim").get<int>();
        spec.action_dim = j.at("action_dim").get<int>();
        spec.goal_dim = j.at("goal_dim").get<int>();
        spec.goal_threshold = j.at("goal_threshold").get<double>();
        spec.terminal_on_goal = j.at("terminal_on_goal").get<bool>();
        spec.relative_goals = j.at("relative_goals").get<bool>();
        spec.episode_budget = j.at("episode_budget").get<int>();
        spec.physics = j.at("physics");
        for (const auto& g : j.at("eval_goals")) {
            Eigen::VectorXd v(spec.goal_dim);
            for (int i = 0; i < spec.goal_dim; ++i) v[i] = g.at(i).get<double>();
            spec.eval_goals.push_back(v);
        }
        const auto& st = j.at("eval_start");
        spec.eval_start.resize(st.size());
        for (std::size_t i = 0; i < st.size(); ++i) spec.eval_start[i] = st.at(i).get<double>();
        if (j.contains("free_boxes")) {
            std::vector<Box> boxes;
            for (const auto& b : j.at("free_boxes"))
                boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(),
                                 b.at(2).get<double>(), b.at(3).get<double>()});
            spec.geometry = MazeGeometry(std::move(boxes));
        }
    } catch (const json::exception& e) {
        throw ConfigError("env config field error in " + path + ": " + e.what());
    }
    spec.config_hash = fnv1a64(bytes);

    // evaluation goals must live in free space
    if (!spec.geometry.empty()) {
        for (const auto& g : spec.eval_goals)
            if (!spec.geometry.free_point(g[0], g[1]))
                throw GeometryError("eval goal inside a wall in " + path);
    }
    return spec;
}

// Episode-level environment interface. Goals are always exchanged in absolute
// coordinates; goal_view() converts to what the agent observes.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const EnvSpec& spec() const = 0;
    // Training reset: random start and goal. Returns the episode goal fg.
    virtual Eigen::VectorXd reset(Rng& rng) = 0;
    // Evaluation reset: fixed start, fixed goal from the spec's list.
    virtual Eigen::VectorXd reset_eval(int goal_index) = 0;
    virtual void step(const Eigen::VectorXd& action) = 0;
    virtual Eigen::VectorXd state_obs() const = 0;
    virtual Eigen::VectorXd achieved_goal() const = 0;
    // Goal-independent terminal condition (pole fall); mazes never trigger it.
    virtual bool fell_over() const { return false; }

    Eigen::VectorXd goal_view(const Eigen::VectorXd& absolute_goal) const {
        return spec().relative_goals ? (absolute_goal - achieved_goal()).eval() : absolute_goal;
    }
};

// --- Dubins Hallway ----------------------------------------------------------
// Constant-speed car; the action steers. Exact arc integration per step, so a
// held action traces a circle of radius speed/omega_max. Hitting a wall leaves
// the car stuck in place for the rest of the episode.
class DubinsEnv final : public Environment {
public:
    struct State {
        double x = 0, y = 0, theta = 0;
        bool stuck = false;
    };

    explicit DubinsEnv(EnvSpec spec) : spec_(std::move(spec)) {
        speed_ = spec_.physics.at("speed").get<double>();
        omega_max_ = spec_.physics.at("omega_max").get<double>();
        dt_ = spec_.physics.at("dt").get<double>();
        if (spec_.geometry.empty()) throw ConfigError("dubins: geometry required");
    }

    const EnvSpec& spec() const override { return spec_; }
    const State& state() const { return s_; }
    void set_state(const State& s) { s_ = s; }

    Eigen::VectorXd reset(Rng& rng) override {
        const Eigen::Vector2d p = spec_.geometry.sample_free(rng);
        s_ = {p.x(), p.y(), rng.uniform(-M_PI, M_PI), false};
        const Eigen::Vector2d g = spec_.geometry.sample_free(rng);
        return g;
    }

    Eigen::VectorXd reset_eval(int goal_index) override {
        s_ = {spec_.eval_start[0], spec_.eval_start[1], spec_.eval_start[2], false};
        return spec_.eval_goals.at(goal_index);
    }

    void step(const Eigen::VectorXd& action) override {
        if (s_.stuck) return;
        const double a = std::clamp(action[0], -1.0, 1.0);
        const double omega = a * omega_max_;
        const double arc_len = speed_ * dt_;
        const int n = std::max(1, static_cast<int>(std::ceil(arc_len / MazeGeometry::kProbeStep)));
        State last = s_;
        for (int i = 1; i <= n; ++i) {
            const double tau = dt_ * static_cast<double>(i) / n;
            State probe = advance(s_, omega, tau);
            if (!spec_.geometry.free_point(probe.x, probe.y)) {
                s_ = last;
                s_.stuck = true;
                return;
            }
            last = probe;
        }
        s_ = last;
    }

    Eigen::VectorXd state_obs() const override {
        Eigen::VectorXd v(4);
        v << s_.x, s_.y, std::cos(s_.theta), std::sin(s_.theta);
        return v;
    }

    Eigen::VectorXd achieved_goal() const override {
        Eigen::Vector2d g(s_.x, s_.y);
        return g;
    }

private:
    State advance(const State& s, double omega, double tau) const {
        State out = s;
        if (std::abs(omega) < 1e-12) {
            out.x = s.x + speed_ * tau * std::cos(s.theta);
            out.y = s.y + speed_ * tau * std::sin(s.theta);
            return out;
        }
        const double r = speed_ / omega;
        out.theta = s.theta + omega * tau;
        out.x = s.x + r * (std::sin(out.theta) - std::sin(s.theta));
        out.y = s.y - r * (std::cos(out.theta) - std::cos(s.theta));
        return out;
    }

    EnvSpec spec_;
    State s_;
    double speed_, omega_max_, dt_;
};

// --- Goal-conditioned cartpole ------------------------------------------------
// Classic cart-pole, continuous force, RK4-integrated. The cart's absolute
// position is hidden from the agent; goals are observed as residuals
// x_target - x. Falling past theta_limit ends the episode, goals never do.
class CartpoleEnv final : public Environment {
public:
    struct State {
        double x = 0, x_dot = 0, theta = 0, theta_dot = 0;
    };

    explicit CartpoleEnv(EnvSpec spec) : spec_(std::move(spec)) {
        gravity_ = spec_.physics.at("gravity").get<double>();
        cart_mass_ = spec_.physics.at("cart_mass").get<double>();
        pole_mass_ = spec_.physics.at("pole_mass").get<double>();
        half_length_ = spec_.physics.at("pole_half_length").get<double>();
        force_max_ = spec_.physics.at("force_max").get<double>();
        dt_ = spec_.physics.at("dt").get<double>();
        theta_limit_ = spec_.physics.at("theta_limit").get<double>();
        start_noise_ = spec_.physics.at("start_noise").get<double>();
        goal_range_ = spec_.physics.at("goal_range").get<double>();
    }

    const EnvSpec& spec() const override { return spec_; }
    const State& state() const { return s_; }
    void set_state(const State& s) { s_ = s; }

    Eigen::VectorXd reset(Rng& rng) override {
        s_ = {0.0, rng.uniform(-start_noise_, start_noise_),
              rng.uniform(-start_noise_, start_noise_),
              rng.uniform(-start_noise_, start_noise_)};
        Eigen::VectorXd g(1);
        g[0] = rng.uniform(-goal_range_, goal_range_);  // relative to the reset position x = 0
        return g;
    }

    Eigen::VectorXd reset_eval(int goal_index) override {
        s_ = {spec_.eval_start[0], spec_.eval_start[1], spec_.eval_start[2], spec_.eval_start[3]};
        return spec_.eval_goals.at(goal_index);
    }

    void step(const Eigen::VectorXd& action) override {
        const double f = std::clamp(action[0], -1.0, 1.0) * force_max_;
        // RK4 over one control interval
        const auto k1 = deriv(s_, f);
        const auto k2 = deriv(shift(s_, k1, dt_ / 2), f);
        const auto k3 = deriv(shift(s_, k2, dt_ / 2), f);
        const auto k4 = deriv(shift(s_, k3, dt_), f);
        s_.x += dt_ / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        s_.x_dot += dt_ / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        s_.theta += dt_ / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
        s_.theta_dot += dt_ / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]);
    }

    Eigen::VectorXd state_obs() const override {
        Eigen::VectorXd v(3);
        v << s_.x_dot, s_.theta, s_.theta_dot;
        return v;
    }

    Eigen::VectorXd achieved_goal() const override {
        return Eigen::VectorXd::Constant(1, s_.x);
    }

    bool fell_over() const override { return std::abs(s_.theta) > theta_limit_; }

private:
    using Deriv = std::array<double, 4>;  // d/dt of (x, x_dot, theta, theta_dot)

    Deriv deriv(const State& s, double force) const {
        const double sin_t = std::sin(s.theta), cos_t = std::cos(s.theta);
        const double total_mass = cart_mass_ + pole_mass_;
        const double pml = pole_mass_ * half_length_;
        const double temp = (force + pml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
        const double theta_acc = (gravity_ * sin_t - cos_t * temp) /
                                 (half_length_ * (4.0 / 3.0 - pole_mass_ * cos_t * cos_t / total_mass));
        const double x_acc = temp - pml * theta_acc * cos_t / total_mass;
        return {s.x_dot, x_acc, s.theta_dot, theta_acc};
    }

    static State shift(const State& s, const Deriv& d, double h) {
        return {s.x + h * d[0], s.x_dot + h * d[1], s.theta + h * d[2], s.theta_dot + h * d[3]};
    }

    EnvSpec spec_;
    State s_;
    double gravity_, cart_mass_, pole_mass_, half_length_, force_max_, dt_, theta_limit_,
        start_noise_, goal_range_;
};

// --- PointMaze ---------------------------------------------------------------
// Double integrator ball, no velocity cap and no friction. Wall contact zeroes
// the blocked velocity component and slides along the free axis.
class PointMazeEnv final : public Environment {
public:
    struct State {
        double x = 0, y = 0, x_dot = 0, y_dot = 0;
    };

    explicit PointMazeEnv(EnvSpec spec) : spec_(std::move(spec)) {
        force_max_ = spec_.physics.at("force_max").get<double>();
        dt_ = spec_.physics.at("dt").get<double>();
        if (spec_.geometry.empty()) throw ConfigError("pointmaze: geometry required");
    }

    const EnvSpec& spec() const override { return spec_; }
    const State& state() const { return s_; }
    void set_state(const State& s) { s_ = s; }

    Eigen::VectorXd reset(Rng& rng) override {
        const Eigen::Vector2d p = spec_.geometry.sample_free(rng);
        s_ = {p.x(), p.y(), 0.0, 0.0};
        const Eigen::Vector2d g = spec_.geometry.sample_free(rng);
        return g;
    }

    Eigen::VectorXd reset_eval(int goal_index) override {
        s_ = {spec_.eval_start[0], spec_.eval_start[1], spec_.eval_start[2], spec_.eval_start[3]};
        return spec_.eval_goals.at(goal_index);
    }

    void step(const Eigen::VectorXd& action) override {
        s_.x_dot += std::clamp(action[0], -1.0, 1.0) * force_max_ * dt_;
        s_.y_dot += std::clamp(action[1], -1.0, 1.0) * force_max_ * dt_;
        // substep so one move never spans a wall feature
        const double travel = std::hypot(s_.x_dot, s_.y_dot) * dt_;
        const int n = std::max(1, static_cast<int>(std::ceil(travel / 0.05)));
        const double h = dt_ / n;
        for (int i = 0; i < n; ++i) {
            move_axis(s_.x, s_.y, s_.x_dot * h, true);
            move_axis(s_.x, s_.y, s_.y_dot * h, false);
        }
    }

    Eigen::VectorXd state_obs() const override {
        Eigen::VectorXd v(4);
        v << s_.x, s_.y, s_.x_dot, s_.y_dot;
        return v;
    }

    Eigen::VectorXd achieved_goal() const override {
        Eigen::Vector2d g(s_.x, s_.y);
        return g;
    }

private:
    void move_axis(double& x, double& y, double delta, bool along_x) {
        if (delta == 0.0) return;
        const Eigen::Vector2d from(x, y);
        const Eigen::Vector2d to = along_x ? Eigen::Vector2d(x + delta, y)
                                           : Eigen::Vector2d(x, y + delta);
        Eigen::Vector2d stop;
        if (spec_.geometry.sweep_segment(from, to, &stop)) {
            x = to.x();
            y = to.y();
        } else {
            x = stop.x();
            y = stop.y();
            (along_x ? s_.x_dot : s_.y_dot) = 0.0;  // stop the normal component
        }
    }

    EnvSpec spec_;
    State s_;
    double force_max_, dt_;
};

inline std::unique_ptr<Environment> make_environment(const EnvSpec& spec) {
    if (spec.name == "dubins_hallway") return std::make_unique<DubinsEnv>(spec);
    if (spec.name == "gc_cartpole") return std::make_unique<CartpoleEnv>(spec);
    if (spec.name == "pointmaze_serp3") return std::make_unique<PointMazeEnv>(spec);
    throw ConfigError("unknown environment: " + spec.name);
}

}  // namespace seqgoal
