#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "seqgoal/errors.hpp"
#include "seqgoal/mlp.hpp"
#include "seqgoal/rng.hpp"

namespace seqgoal {

struct Td3Config {
    double gamma = 0.99;
    int policy_delay = 2;
    double exploration_sigma = 0.1;
    double target_noise_sigma = 0.2;
    double target_noise_clip = 0.5;
    double tau = 0.005;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    std::vector<int> hidden = {256, 256};
};

// One update batch, column-per-sample.
struct Batch {
    Eigen::MatrixXd obs;       // obs_dim x n
    Eigen::MatrixXd actions;   // action_dim x n
    Eigen::VectorXd rewards;   // n
    Eigen::MatrixXd next_obs;  // obs_dim x n
    Eigen::VectorXd terminal;  // n, entries 0 or 1

    int size() const { return static_cast<int>(rewards.size()); }
};

struct UpdateDiagnostics {
    double critic1_loss = 0.0;
    double critic2_loss = 0.0;
    double actor_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when skipped
    double critic_grad_norm = 0.0;
    bool actor_updated = false;
};

// TD3: twin critics with clipped target-policy smoothing, delayed actor
// updates, Polyak-averaged target networks.
class Td3Agent {
public:
    Td3Agent(int obs_dim, int action_dim, const Td3Config& cfg, Rng& init_rng)
        : obs_dim_(obs_dim), action_dim_(action_dim), cfg_(cfg) {
        std::vector<int> actor_sizes{obs_dim};
        actor_sizes.insert(actor_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        actor_sizes.push_back(action_dim);
        std::vector<int> critic_sizes{obs_dim + action_dim};
        critic_sizes.insert(critic_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        critic_sizes.push_back(1);

        actor_ = make_mlp_random(actor_sizes, init_rng, 1e-3);
        critic1_ = make_mlp_random(critic_sizes, init_rng);
        critic2_ = make_mlp_random(critic_sizes, init_rng);
        actor_target_ = actor_;
        critic1_target_ = critic1_;
        critic2_target_ = critic2_;
    }

    int obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }
    const Td3Config& config() const { return cfg_; }
    std::int64_t update_counter() const { return update_counter_; }

    Mlp& actor() { return actor_; }
    Mlp& actor_target() { return actor_target_; }
    Mlp& critic1() { return critic1_; }
    Mlp& critic2() { return critic2_; }
    Mlp& critic1_target() { return critic1_target_; }
    Mlp& critic2_target() { return critic2_target_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic1() const { return critic1_; }

    // Deterministic tanh policy; exploration adds clamped Gaussian noise.
    Eigen::VectorXd select_action(const Eigen::VectorXd& obs, bool explore, Rng& rng) const {
        if (obs.size() != obs_dim_) throw std::invalid_argument("select_action: obs size");
        if (!obs.allFinite()) throw NumericError("select_action: non-finite observation");
        Eigen::VectorXd a = mlp_forward(actor_, obs, OutputActivation::kTanh);
        if (explore) {
            for (int i = 0; i < a.size(); ++i)
                a[i] = std::clamp(a[i] + rng.gaussian(0.0, cfg_.exploration_sigma), -1.0, 1.0);
        }
        return a;
    }

    // y = r + gamma * (1 - term) * min(Q1', Q2')(s', a'), with a' the smoothed
    // target action. Single-sample flavor used by tests and diagnostics.
    double critic_target_value(double reward, const Eigen::VectorXd& next_obs, bool terminal,
                               Rng& rng) const {
        if (terminal) return reward;  // no bootstrap through terminal states
        const Eigen::VectorXd a = smoothed_target_action(next_obs, rng);
        Eigen::VectorXd in(obs_dim_ + action_dim_);
        in << next_obs, a;
        const double q1 = mlp_forward(critic1_target_, in, OutputActivation::kIdentity)[0];
        const double q2 = mlp_forward(critic2_target_, in, OutputActivation::kIdentity)[0];
        return reward + cfg_.gamma * std::min(q1, q2);
    }

    // One TD3 step: both critics every call, actor and targets every
    // policy_delay-th call. Throws NumericError on non-finite losses.
    UpdateDiagnostics update(const Batch& batch, Rng& rng) {
        const int n = batch.size();
        if (n == 0) throw std::invalid_argument("td3 update: empty batch");
        if (batch.obs.rows() != obs_dim_ || batch.next_obs.rows() != obs_dim_ ||
            batch.actions.rows() != action_dim_)
            throw std::invalid_argument("td3 update: batch shape mismatch");

        UpdateDiagnostics diag;

        // targets
        mlp_forward_batch(actor_target_, batch.next_obs, OutputActivation::kTanh, actor_cache_);
        target_in_.resize(obs_dim_ + action_dim_, n);
        target_in_.topRows(obs_dim_) = batch.next_obs;
        target_in_.bottomRows(action_dim_) = actor_cache_.act.back();
        if (cfg_.target_noise_sigma > 0.0) {
            auto acts = target_in_.bottomRows(action_dim_);
            for (int c = 0; c < n; ++c)
                for (int r = 0; r < action_dim_; ++r) {
                    const double eps = std::clamp(rng.gaussian(0.0, cfg_.target_noise_sigma),
                                                  -cfg_.target_noise_clip, cfg_.target_noise_clip);
                    acts(r, c) = std::clamp(acts(r, c) + eps, -1.0, 1.0);
                }
        }
        q1t_ = mlp_forward_batch(critic1_target_, target_in_, OutputActivation::kIdentity,
                                 scratch_cache_)
                   .row(0);
        q2t_ = mlp_forward_batch(critic2_target_, target_in_, OutputActivation::kIdentity,
                                 scratch_cache_)
                   .row(0);
        y_.resize(n);
        for (int c = 0; c < n; ++c)
            y_[c] = batch.rewards[c] +
                    cfg_.gamma * (1.0 - batch.terminal[c]) * std::min(q1t_[c], q2t_[c]);

        // critic regression toward the shared target
        critic_in_.resize(obs_dim_ + action_dim_, n);
        critic_in_.topRows(obs_dim_) = batch.obs;
        critic_in_.bottomRows(action_dim_) = batch.actions;
        diag.critic1_loss = critic_step(critic1_, critic_in_, y_, n, &diag.critic_grad_norm);
        diag.critic2_loss = critic_step(critic2_, critic_in_, y_, n, nullptr);
        if (!std::isfinite(diag.critic1_loss) || !std::isfinite(diag.critic2_loss))
            throw NumericError("td3 update: non-finite critic loss");

        update_counter_ += 1;
        if (update_counter_ % cfg_.policy_delay == 0) {
            diag.actor_loss = actor_step(batch.obs, n);
            if (!std::isfinite(diag.actor_loss))
                throw NumericError("td3 update: non-finite actor loss");
            diag.actor_updated = true;
            polyak_update(actor_target_, actor_, cfg_.tau);
            polyak_update(critic1_target_, critic1_, cfg_.tau);
            polyak_update(critic2_target_, critic2_, cfg_.tau);
        }
        return diag;
    }

    void save(std::ostream& os) const {
        os.write("SGTD", 4);
        detail::put_u32(os, 1);  // format version
        detail::put_u32(os, static_cast<std::uint32_t>(obs_dim_));
        detail::put_u32(os, static_cast<std::uint32_t>(action_dim_));
        detail::put_i64(os, update_counter_);
        double scalars[8] = {cfg_.gamma,
                             static_cast<double>(cfg_.policy_delay),
                             cfg_.exploration_sigma,
                             cfg_.target_noise_sigma,
                             cfg_.target_noise_clip,
                             cfg_.tau,
                             cfg_.actor_lr,
                             cfg_.critic_lr};
        detail::put_doubles(os, scalars, 8);
        for (const Mlp* net :
             {&actor_, &actor_target_, &critic1_, &critic2_, &critic1_target_, &critic2_target_})
            save_mlp(*net, os);
    }

    static Td3Agent load(std::istream& is) {
        char magic[4] = {};
        is.read(magic, 4);
        if (std::string_view(magic, 4) != "SGTD")
            throw std::runtime_error("agent checkpoint: bad magic");
        if (detail::get_u32(is) != 1)
            throw std::runtime_error("agent checkpoint: unsupported version");
        const int obs_dim = static_cast<int>(detail::get_u32(is));
        const int action_dim = static_cast<int>(detail::get_u32(is));
        const std::int64_t counter = detail::get_i64(is);
        double s[8];
        detail::get_doubles(is, s, 8);
        Td3Config cfg;
        cfg.gamma = s[0];
        cfg.policy_delay = static_cast<int>(s[1]);
        cfg.exploration_sigma = s[2];
        cfg.target_noise_sigma = s[3];
        cfg.target_noise_clip = s[4];
        cfg.tau = s[5];
        cfg.actor_lr = s[6];
        cfg.critic_lr = s[7];

        Rng dummy(0);
        Td3Agent agent(obs_dim, action_dim, cfg, dummy);
        agent.update_counter_ = counter;
        agent.actor_ = load_mlp(is);
        agent.actor_target_ = load_mlp(is);
        agent.critic1_ = load_mlp(is);
        agent.critic2_ = load_mlp(is);
        agent.critic1_target_ = load_mlp(is);
        agent.critic2_target_ = load_mlp(is);
        if (!is) throw std::runtime_error("agent checkpoint: truncated stream");
        return agent;
    }

private:
    Eigen::VectorXd smoothed_target_action(const Eigen::VectorXd& next_obs, Rng& rng) const {
        Eigen::VectorXd a = mlp_forward(actor_target_, next_obs, OutputActivation::kTanh);
        if (cfg_.target_noise_sigma > 0.0) {
            for (int i = 0; i < a.size(); ++i) {
                const double eps = std::clamp(rng.gaussian(0.0, cfg_.target_noise_sigma),
                                              -cfg_.target_noise_clip, cfg_.target_noise_clip);
                a[i] = std::clamp(a[i] + eps, -1.0, 1.0);
            }
        }
        return a;
    }

    double critic_step(Mlp& critic, const Eigen::MatrixXd& critic_in, const Eigen::VectorXd& y,
                       int n, double* grad_norm_out) {
        const Eigen::RowVectorXd q =
            mlp_forward_batch(critic, critic_in, OutputActivation::kIdentity, critic_cache_).row(0);
        const Eigen::RowVectorXd residual = q - y.transpose();
        const double loss = residual.squaredNorm() / n;
        upstream_ = (2.0 / n) * residual;
        mlp_backward_batch(critic, critic_cache_, upstream_, OutputActivation::kIdentity,
                           critic_grads_, &critic_ws_);
        if (grad_norm_out) {
            double sq = 0.0;
            for (const auto& m : critic_grads_.w) sq += m.squaredNorm();
            for (const auto& v : critic_grads_.b) sq += v.squaredNorm();
            *grad_norm_out = std::sqrt(sq);
        }
        if (!adam_step(critic, critic_grads_, cfg_.critic_lr))
            throw NumericError("td3 update: non-finite critic gradients");
        return loss;
    }

    // Gradient ascent on mean Q1(s, pi(s)); implemented as descent on its negation.
    double actor_step(const Eigen::MatrixXd& obs, int n) {
        mlp_forward_batch(actor_, obs, OutputActivation::kTanh, actor_cache_);
        critic_in_.resize(obs_dim_ + action_dim_, n);
        critic_in_.topRows(obs_dim_) = obs;
        critic_in_.bottomRows(action_dim_) = actor_cache_.act.back();
        const Eigen::RowVectorXd q =
            mlp_forward_batch(critic1_, critic_in_, OutputActivation::kIdentity, critic_cache_).row(0);
        const double loss = -q.mean();

        upstream_ = Eigen::MatrixXd::Constant(1, n, -1.0 / n);
        mlp_backward_batch(critic1_, critic_cache_, upstream_, OutputActivation::kIdentity,
                           scratch_grads_, &critic_ws_, &dq_din_);
        mlp_backward_batch(actor_, actor_cache_, dq_din_.bottomRows(action_dim_),
                           OutputActivation::kTanh, actor_grads_, &actor_ws_);
        if (!adam_step(actor_, actor_grads_, cfg_.actor_lr))
            throw NumericError("td3 update: non-finite actor gradients");
        return loss;
    }

    int obs_dim_;
    int action_dim_;
    Td3Config cfg_;
    std::int64_t update_counter_ = 0;
    Mlp actor_, actor_target_, critic1_, critic2_, critic1_target_, critic2_target_;

    // hot-path workspaces
    ForwardCache actor_cache_, critic_cache_, scratch_cache_;
    GradientSet critic_grads_, actor_grads_, scratch_grads_;
    BackwardWorkspace critic_ws_, actor_ws_;
    Eigen::MatrixXd target_in_, critic_in_, upstream_, dq_din_;
    Eigen::RowVectorXd q1t_, q2t_;
    Eigen::VectorXd y_;
};

}  // namespace seqgoal
