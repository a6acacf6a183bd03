#ifndef BATCHANNO_GRPO_HPP
#define BATCHANNO_GRPO_HPP

#include "corpus.hpp"
#include "errors.hpp"
#include "random.hpp"
#include "respparse.hpp"
#include "reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

/**
 * @file grpo.hpp
 *
 * @brief Group relative policy optimization on a tabular assignment policy.
 *
 * Each sampled trajectory assigns every candidate label to exactly one cell
 * slot. For a group of G trajectories drawn from the old policy the objective
 * is
 *
 *     J = 1/G * sum_i [ min(p_i A_i, clip(p_i, 1-eps, 1+eps) A_i) - beta * KL_i ]
 *
 * with p_i the trajectory probability ratio between the current and old
 * policies, A_i the group-normalized reward, and KL_i the non-negative
 * estimator r - ln r - 1 with r = pi_ref / pi_current. Ratios and KL are
 * taken at trajectory granularity.
 */

namespace batchanno {

struct GrpoConfig {
    std::size_t group_size = 5;
    double clip_epsilon = 0.2;
    double kl_beta = 0.001;
    double learning_rate = 300.0;
    std::size_t steps = 500;
    double advantage_std_floor = 1e-8;
    std::uint64_t rng_seed = 0;

    /// Upper bound applied to each per-trajectory KL estimate inside the objective;
    /// estimates above it contribute a constant (zero gradient). Infinity disables it.
    double kl_clamp = 10.0;

    /// Gradient steps taken on each sampled group before resampling.
    std::size_t updates_per_step = 1;

    /// Warm-start logit of each slot's true label; all unrelated labels start at 0.
    double affinity_truth = 20.0;
    /// Mean warm-start advantage of each slot's confusable label over its true label.
    double affinity_confuser_gap = -1.0;
    /// Width of the fixed spread around `affinity_confuser_gap`.
    double affinity_noise = 3.0;
};

/// Reasoning text placed inside the think block of toy rollouts.
inline constexpr std::string_view toy_reasoning = "assignment sampled from the tabular policy";

/**
 * @brief Tabular softmax policy over sequential assignments.
 *
 * Slot s picks a candidate with probability proportional to exp(logit(s, c))
 * among the candidates not taken by earlier slots, so every trajectory is a
 * permutation of the candidate indices.
 */
class ToyPolicy {
public:
    ToyPolicy() = default;

    explicit ToyPolicy(std::size_t n) : n_(n), logits_(n * n, 0.0) {}

    std::size_t size() const { return n_; }

    double& logit(std::size_t slot, std::size_t candidate) { return logits_[slot * n_ + candidate]; }
    double logit(std::size_t slot, std::size_t candidate) const { return logits_[slot * n_ + candidate]; }

    std::span<double> parameters() { return logits_; }
    std::span<const double> parameters() const { return logits_; }

    /// Probabilities for `slot` given the candidates already `taken`; taken entries are zero.
    std::vector<double> step_probabilities(std::size_t slot, const std::vector<bool>& taken) const {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_; ++c) {
            if (!taken[c]) {
                top = std::max(top, logit(slot, c));
            }
        }
        std::vector<double> probs(n_, 0.0);
        double total = 0;
        for (std::size_t c = 0; c < n_; ++c) {
            if (!taken[c]) {
                probs[c] = std::exp(logit(slot, c) - top);
                total += probs[c];
            }
        }
        for (auto& p : probs) {
            p /= total;
        }
        return probs;
    }

    double log_prob(std::span<const std::size_t> trajectory) const {
        check_trajectory(trajectory);
        std::vector<bool> taken(n_, false);
        double total = 0;
        for (std::size_t slot = 0; slot < n_; ++slot) {
            total += step_log_prob(slot, taken, trajectory[slot]);
            taken[trajectory[slot]] = true;
        }
        return total;
    }

    /// Adds `weight * d log_prob(trajectory) / d logits` into `gradient`.
    void accumulate_log_prob_gradient(std::span<const std::size_t> trajectory, double weight,
                                      std::span<double> gradient) const {
        check_trajectory(trajectory);
        std::vector<bool> taken(n_, false);
        for (std::size_t slot = 0; slot < n_; ++slot) {
            const auto probs = step_probabilities(slot, taken);
            for (std::size_t c = 0; c < n_; ++c) {
                if (!taken[c]) {
                    const double indicator = c == trajectory[slot] ? 1.0 : 0.0;
                    gradient[slot * n_ + c] += weight * (indicator - probs[c]);
                }
            }
            taken[trajectory[slot]] = true;
        }
    }

    std::vector<std::size_t> sample(Engine& engine) const {
        std::vector<bool> taken(n_, false);
        std::vector<std::size_t> trajectory(n_);
        for (std::size_t slot = 0; slot < n_; ++slot) {
            const auto probs = step_probabilities(slot, taken);
            const double u = uniform_unit(engine);
            double cumulative = 0;
            std::size_t pick = n_;
            for (std::size_t c = 0; c < n_; ++c) {
                if (taken[c]) {
                    continue;
                }
                pick = c;
                cumulative += probs[c];
                if (u < cumulative) {
                    break;
                }
            }
            trajectory[slot] = pick;
            taken[pick] = true;
        }
        return trajectory;
    }

    /// Most likely candidate at each slot in turn; ties go to the lower index.
    std::vector<std::size_t> greedy() const {
        std::vector<bool> taken(n_, false);
        std::vector<std::size_t> trajectory(n_);
        for (std::size_t slot = 0; slot < n_; ++slot) {
            std::size_t best = n_;
            for (std::size_t c = 0; c < n_; ++c) {
                if (!taken[c] && (best == n_ || logit(slot, c) > logit(slot, best))) {
                    best = c;
                }
            }
            trajectory[slot] = best;
            taken[best] = true;
        }
        return trajectory;
    }

    bool operator==(const ToyPolicy&) const = default;

private:
    double step_log_prob(std::size_t slot, const std::vector<bool>& taken, std::size_t chosen) const {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_; ++c) {
            if (!taken[c]) {
                top = std::max(top, logit(slot, c));
            }
        }
        double total = 0;
        for (std::size_t c = 0; c < n_; ++c) {
            if (!taken[c]) {
                total += std::exp(logit(slot, c) - top);
            }
        }
        return logit(slot, chosen) - top - std::log(total);
    }

    void check_trajectory(std::span<const std::size_t> trajectory) const {
        if (trajectory.size() != n_) {
            throw ShapeError("trajectory has " + std::to_string(trajectory.size()) + " steps, policy has " +
                             std::to_string(n_) + " slots");
        }
        std::vector<bool> seen(n_, false);
        for (auto c : trajectory) {
            if (c >= n_ || seen[c]) {
                throw ContractViolation("trajectory is not a one-to-one assignment");
            }
            seen[c] = true;
        }
    }

    std::size_t n_ = 0;
    std::vector<double> logits_;
};

struct RolloutGroup {
    std::string instance_id;
    std::vector<std::vector<std::size_t>> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<bool> format_valid;

    std::size_t size() const { return trajectories.size(); }
};

/**
 * (r_i - mean) / std using the population standard deviation. Groups whose
 * std does not exceed `std_floor` get all-zero advantages.
 */
inline std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor) {
    if (rewards.size() < 2) {
        throw GroupTooSmall("advantage normalization needs at least 2 rewards, got " + std::to_string(rewards.size()));
    }
    const double count = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / count;
    double squares = 0;
    for (double r : rewards) {
        squares += (r - mean) * (r - mean);
    }
    const double stddev = std::sqrt(squares / count);

    std::vector<double> advantages(rewards.size(), 0.0);
    if (!(stddev > std_floor)) {
        return advantages;
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        advantages[i] = (rewards[i] - mean) / stddev;
    }
    return advantages;
}

inline double clip_ratio(double ratio, double epsilon) {
    return std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
}

/// min(p A, clip(p, 1-eps, 1+eps) A) with p = exp(logp_new - logp_old).
inline double clipped_surrogate(double logp_new, double logp_old, double advantage, double epsilon) {
    if (advantage == 0) {
        return 0;
    }
    const double ratio = std::exp(logp_new - logp_old);
    const double clipped = clip_ratio(ratio, epsilon) * advantage;
    if (!std::isfinite(ratio)) {
        return clipped;
    }
    return std::min(ratio * advantage, clipped);
}

/// d clipped_surrogate / d logp_new.
inline double clipped_surrogate_slope(double logp_new, double logp_old, double advantage, double epsilon) {
    if (advantage == 0) {
        return 0;
    }
    const double ratio = std::exp(logp_new - logp_old);
    if (!std::isfinite(ratio)) {
        return 0;
    }
    return ratio * advantage <= clip_ratio(ratio, epsilon) * advantage ? ratio * advantage : 0.0;
}

/// r - ln r - 1 with r = exp(logp_ref - logp_new); never negative.
inline double kl_penalty(double logp_new, double logp_ref) {
    const double log_ratio = logp_ref - logp_new;
    return std::expm1(log_ratio) - log_ratio;
}

struct ObjectiveResult {
    double objective = 0;
    /// Same layout as `ToyPolicy::parameters()`.
    std::vector<double> gradient;
};

/**
 * Evaluates the group objective at `policy` and its exact gradient with
 * respect to the policy logits. Log-probabilities under all three snapshots
 * are recomputed from the group's trajectories.
 */
inline ObjectiveResult objective_and_gradient(const ToyPolicy& policy, const ToyPolicy& old_policy,
                                              const ToyPolicy& ref_policy, const RolloutGroup& group,
                                              const GrpoConfig& config) {
    if (old_policy.size() != policy.size() || ref_policy.size() != policy.size()) {
        throw ShapeError("policy snapshots differ in size");
    }
    const auto g = group.size();
    if (g == 0 || group.advantages.size() != g) {
        throw ShapeError("rollout group needs one advantage per trajectory");
    }

    ObjectiveResult result;
    result.gradient.assign(policy.parameters().size(), 0.0);
    const double inv_g = 1.0 / static_cast<double>(g);
    for (std::size_t i = 0; i < g; ++i) {
        const auto& trajectory = group.trajectories[i];
        const double logp_new = policy.log_prob(trajectory);
        const double logp_old = old_policy.log_prob(trajectory);
        const double logp_ref = ref_policy.log_prob(trajectory);
        const double advantage = group.advantages[i];

        const double surrogate = clipped_surrogate(logp_new, logp_old, advantage, config.clip_epsilon);
        const double kl = kl_penalty(logp_new, logp_ref);
        const bool kl_clamped = kl > config.kl_clamp;
        result.objective += inv_g * (surrogate - config.kl_beta * (kl_clamped ? config.kl_clamp : kl));

        // d kl / d logp_new = 1 - r
        const double kl_slope = kl_clamped ? 0.0 : -std::expm1(logp_ref - logp_new);
        const double slope = clipped_surrogate_slope(logp_new, logp_old, advantage, config.clip_epsilon) -
                             config.kl_beta * kl_slope;
        if (slope != 0) {
            policy.accumulate_log_prob_gradient(trajectory, inv_g * slope, result.gradient);
        }
    }
    return result;
}

/// Labels chosen by a trajectory, slot by slot.
inline std::vector<std::string> trajectory_labels(std::span<const std::size_t> trajectory,
                                                  std::span<const std::string> candidates) {
    std::vector<std::string> labels;
    labels.reserve(trajectory.size());
    for (auto c : trajectory) {
        labels.push_back(candidates[c]);
    }
    return labels;
}

/// Tagged response for a trajectory, as a language model would emit it.
inline std::string render_trajectory(std::span<const std::size_t> trajectory, std::span<const std::string> candidates) {
    const auto labels = trajectory_labels(trajectory, candidates);
    return render_answer(toy_reasoning, labels);
}

/**
 * Draws G trajectories from `old_policy`, scores their rendered responses and
 * fills in advantages and log-probabilities (current == old at sampling time).
 */
inline RolloutGroup sample_group(const ToyPolicy& old_policy, const ToyPolicy& ref_policy, const BatchInstance& instance,
                                 const GrpoConfig& config, RewardKind reward_kind, Engine& engine) {
    if (old_policy.size() != instance.size()) {
        throw ShapeError("policy size does not match instance " + instance.instance_id);
    }
    RolloutGroup group;
    group.instance_id = instance.instance_id;
    for (std::size_t i = 0; i < config.group_size; ++i) {
        auto trajectory = old_policy.sample(engine);
        const auto response = render_trajectory(trajectory, instance.candidates);
        const auto outcome = compute_reward(reward_kind, response, instance.answer);
        group.rewards.push_back(outcome.value);
        group.format_valid.push_back(outcome.format_valid);
        group.logp_old.push_back(old_policy.log_prob(trajectory));
        group.logp_ref.push_back(ref_policy.log_prob(trajectory));
        group.trajectories.push_back(std::move(trajectory));
    }
    group.logp_new = group.logp_old;
    group.advantages = normalize_advantages(group.rewards, config.advantage_std_floor);
    return group;
}

/**
 * Warm-start policy for an instance, standing in for a supervised starting
 * point. Every logit starts at 0 except two per slot: the slot's true label
 * gets `affinity_truth`, and the true label of the next slot (cyclically)
 * gets `affinity_truth + offset` with a fixed offset drawn from
 * [confuser_gap - noise/2, confuser_gap + noise/2). Slots with a positive
 * offset are greedily mislabeled, which cascades into the following slots.
 * The offsets depend only on the instance id, so the start is the same for
 * every seed.
 */
inline ToyPolicy affinity_policy(const BatchInstance& instance, const GrpoConfig& config) {
    const auto n = instance.size();
    ToyPolicy policy(n);
    std::vector<std::size_t> slot_of_candidate(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t s = 0; s < n; ++s) {
            if (instance.candidates[c] == instance.answer[s]) {
                slot_of_candidate[c] = s;
            }
        }
    }

    Engine engine(derive_seed(0x5eedULL, "affinity\x1f" + instance.instance_id));
    for (std::size_t slot = 0; slot < n; ++slot) {
        const double offset = config.affinity_confuser_gap + config.affinity_noise * (uniform_unit(engine) - 0.5);
        for (std::size_t c = 0; c < n; ++c) {
            if (slot_of_candidate[c] == slot) {
                policy.logit(slot, c) = config.affinity_truth;
            } else if (n > 1 && slot_of_candidate[c] == (slot + 1) % n) {
                policy.logit(slot, c) = config.affinity_truth + offset;
            }
        }
    }
    return policy;
}

struct TraceRow {
    std::size_t step = 0;
    double mean_reward = 0;
    double greedy_batch_acc = 0;
    double mean_kl = 0;
    double mean_response_valid = 0;

    bool operator==(const TraceRow&) const = default;
};

struct TrainingResult {
    std::vector<TraceRow> trace;
    std::vector<ToyPolicy> policies;
};

/// Fraction of instances whose greedy assignment earns batch reward 1.
inline double greedy_batch_accuracy(std::span<const ToyPolicy> policies, std::span<const BatchInstance> corpus) {
    std::size_t correct = 0;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
        const auto response = render_trajectory(policies[j].greedy(), corpus[j].candidates);
        correct += batch_reward(response, corpus[j].answer).value == 1.0 ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

/**
 * Runs GRPO with one tabular policy per instance, each starting from (and
 * regularized towards) its `affinity_policy`. Every step snapshots the old
 * policy, samples one group per instance, and applies `updates_per_step`
 * plain gradient-ascent updates. Deterministic for a fixed `rng_seed`.
 */
inline TrainingResult train_toy(std::span<const BatchInstance> corpus, const GrpoConfig& config, RewardKind reward_kind) {
    if (corpus.empty()) {
        throw EmptyCorpus();
    }
    if (config.group_size < 2) {
        throw GroupTooSmall("group size must be at least 2");
    }

    TrainingResult result;
    std::vector<ToyPolicy> references;
    for (const auto& instance : corpus) {
        references.push_back(affinity_policy(instance, config));
    }
    result.policies = references;

    for (std::size_t step = 1; step <= config.steps; ++step) {
        TraceRow row;
        row.step = step;
        std::size_t rollouts = 0;
        for (std::size_t j = 0; j < corpus.size(); ++j) {
            auto& policy = result.policies[j];
            const ToyPolicy old_policy = policy;
            Engine engine(derive_seed(config.rng_seed, step * corpus.size() + j));
            const auto group = sample_group(old_policy, references[j], corpus[j], config, reward_kind, engine);

            for (std::size_t i = 0; i < group.size(); ++i) {
                row.mean_reward += group.rewards[i];
                row.mean_kl += kl_penalty(group.logp_new[i], group.logp_ref[i]);
                row.mean_response_valid += group.format_valid[i] ? 1.0 : 0.0;
            }
            rollouts += group.size();

            for (std::size_t u = 0; u < config.updates_per_step; ++u) {
                const auto update = objective_and_gradient(policy, old_policy, references[j], group, config);
                auto params = policy.parameters();
                for (std::size_t k = 0; k < params.size(); ++k) {
                    params[k] += config.learning_rate * update.gradient[k];
                }
            }
        }
        row.mean_reward /= static_cast<double>(rollouts);
        row.mean_kl /= static_cast<double>(rollouts);
        row.mean_response_valid /= static_cast<double>(rollouts);
        row.greedy_batch_acc = greedy_batch_accuracy(result.policies, corpus);
        result.trace.push_back(row);
    }
    return result;
}

/// CSV with header `step,mean_reward,greedy_batch_acc,mean_kl,mean_response_valid`.
inline void write_trace_csv(std::span<const TraceRow> trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw WriteError(path);
    }
    out.precision(17);
    out << "step,mean_reward,greedy_batch_acc,mean_kl,mean_response_valid\n";
    for (const auto& row : trace) {
        out << row.step << ',' << row.mean_reward << ',' << row.greedy_batch_acc << ',' << row.mean_kl << ','
            << row.mean_response_valid << '\n';
    }
    out.flush();
    if (!out) {
        throw WriteError(path);
    }
}

/// Every permutation of 0..n-1 in lexicographic order; n is capped at 8.
inline std::vector<std::vector<std::size_t>> enumerate_assignments(std::size_t n) {
    if (n > 8) {
        throw TooLarge("cannot enumerate " + std::to_string(n) + "! assignments (limit n = 8)");
    }
    std::vector<std::size_t> current(n);
    std::iota(current.begin(), current.end(), 0);
    std::vector<std::vector<std::size_t>> output;
    do {
        output.push_back(current);
    } while (std::next_permutation(current.begin(), current.end()));
    return output;
}

/// Exact expected reward of `policy` on `instance`, summed over all assignments.
inline double expected_reward(const ToyPolicy& policy, const BatchInstance& instance, RewardKind kind) {
    double total = 0;
    for (const auto& trajectory : enumerate_assignments(instance.size())) {
        const auto response = render_trajectory(trajectory, instance.candidates);
        total += std::exp(policy.log_prob(trajectory)) * compute_reward(kind, response, instance.answer).value;
    }
    return total;
}

} // namespace batchanno

#endif
