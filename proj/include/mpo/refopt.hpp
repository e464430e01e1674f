// Copyright 2026 The MPO Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/planner.hpp"

/// Log-linear reference plan policy: pi(p_i | u) = softmax_i(w . phi(u, p_i)).
/// SFT and DPO losses are evaluated on it exactly, with analytic gradients.
namespace mpo::refopt {

inline constexpr std::size_t kFeatureDim = 6;

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()), "dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// [steps/10, abstractness, mean step length/50, has_locate, has_process, 1]
inline Vec plan_features(const MetaPlan& plan, const std::string& env_id) {
  const auto& vocab = planner::vocabulary(env_id);
  const double n = static_cast<double>(plan.steps.size());
  double abstract = 0.0, length = 0.0, locate = 0.0, process = 0.0;
  for (const auto& s : plan.steps) {
    if (planner::indexed_tokens(s, vocab).empty()) abstract += 1.0;
    length += static_cast<double>(s.size());
    const auto norm = text::normalize_step(s);
    if (norm.find("where") != std::string::npos) locate = 1.0;
    const auto verb = planner::leading_verb(s);
    if (verb == "heat" || verb == "cool" || verb == "clean") process = 1.0;
  }
  if (n == 0.0) return {0.0, 0.0, 0.0, 0.0, 0.0, 1.0};
  return {n / 10.0, abstract / n, length / n / 50.0, locate, process, 1.0};
}

inline Vec scores(const Vec& w, const std::vector<Vec>& candidates) {
  Vec s;
  s.reserve(candidates.size());
  for (const auto& c : candidates) s.push_back(dot(w, c));
  return s;
}

inline double log_sum_exp(const Vec& s) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : s) m = std::max(m, x);
  double acc = 0.0;
  for (double x : s) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline Vec softmax(const Vec& w, const std::vector<Vec>& candidates) {
  auto s = scores(w, candidates);
  const double lse = log_sum_exp(s);
  for (auto& x : s) x = std::exp(x - lse);
  return s;
}

inline double policy_log_prob(const Vec& w, const std::vector<Vec>& candidates, std::size_t index) {
  if (candidates.empty()) throw DataError("policy needs at least one candidate", "empty_candidates");
  if (index >= candidates.size()) throw DataError("candidate index out of range", "index");
  const auto s = scores(w, candidates);
  return s[index] - log_sum_exp(s);
}

// Gradient of log pi(index) with respect to w: phi_index - E_pi[phi].
inline Vec log_prob_grad(const Vec& w, const std::vector<Vec>& candidates, std::size_t index) {
  const auto pi = softmax(w, candidates);
  Vec g = candidates[index];
  for (std::size_t j = 0; j < candidates.size(); ++j)
    for (std::size_t k = 0; k < g.size(); ++k) g[k] -= pi[j] * candidates[j][k];
  return g;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double log_sigmoid(double x) { return -softplus(-x); }

inline std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Most probable candidate; lowest index on ties.
inline std::size_t argmax_plan(const Vec& w, const std::vector<Vec>& candidates) {
  return argmax(scores(w, candidates));
}

struct SftExample {
  std::vector<Vec> candidates;
  std::size_t target = 0;
};

struct DpoExample {
  std::vector<Vec> candidates;
  std::size_t chosen = 0;
  std::size_t rejected = 0;
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

inline LossGrad sft_loss_and_grad(const Vec& w, const std::vector<SftExample>& data) {
  if (data.empty()) throw DataError("SFT dataset is empty", "empty_dataset");
  LossGrad out{0.0, Vec(w.size(), 0.0)};
  for (const auto& ex : data) {
    out.loss -= policy_log_prob(w, ex.candidates, ex.target);
    const auto g = log_prob_grad(w, ex.candidates, ex.target);
    for (std::size_t k = 0; k < w.size(); ++k) out.grad[k] -= g[k];
  }
  const double n = static_cast<double>(data.size());
  out.loss /= n;
  for (auto& g : out.grad) g /= n;
  return out;
}

inline double dpo_margin(const Vec& w, const Vec& w_ref, const DpoExample& ex, double beta) {
  const double chosen = policy_log_prob(w, ex.candidates, ex.chosen) - policy_log_prob(w_ref, ex.candidates, ex.chosen);
  const double rejected =
      policy_log_prob(w, ex.candidates, ex.rejected) - policy_log_prob(w_ref, ex.candidates, ex.rejected);
  return beta * (chosen - rejected);
}

inline LossGrad dpo_loss_and_grad(const Vec& w, const Vec& w_ref, const std::vector<DpoExample>& data, double beta) {
  if (data.empty()) throw DataError("DPO dataset is empty", "empty_dataset");
  if (w.size() != w_ref.size()) throw DataError("w and w_ref differ in dimension", "dimension");
  LossGrad out{0.0, Vec(w.size(), 0.0)};
  for (const auto& ex : data) {
    const double m = dpo_margin(w, w_ref, ex, beta);
    out.loss -= log_sigmoid(m);
    // d(-log sigmoid(m))/dm = -sigmoid(-m); dm/dw = beta (grad log pi(c) - grad log pi(r)).
    const double coef = -sigmoid(-m) * beta;
    const auto gc = log_prob_grad(w, ex.candidates, ex.chosen);
    const auto gr = log_prob_grad(w, ex.candidates, ex.rejected);
    for (std::size_t k = 0; k < w.size(); ++k) out.grad[k] += coef * (gc[k] - gr[k]);
  }
  const double n = static_cast<double>(data.size());
  out.loss /= n;
  for (auto& g : out.grad) g /= n;
  return out;
}

enum class Mode { sft, dpo };

NLOHMANN_JSON_SERIALIZE_ENUM(Mode, {{Mode::sft, "sft"}, {Mode::dpo, "dpo"}})

struct TrainConfig {
  double beta = 0.1;
  // The LLM setting uses 1e-5; the six-weight policy needs a larger step.
  double learning_rate = 1e-3;
  int epochs = 3;
  std::uint64_t seed = 0;
  bool operator==(const TrainConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, beta, learning_rate, epochs, seed)

struct TrainResult {
  Vec w;
  Vec w_ref;
  // Loss before each epoch, then the final loss: epochs + 1 entries.
  std::vector<double> loss_curve;
};

inline void check_finite(double loss, const Vec& w, int epoch) {
  bool ok = std::isfinite(loss);
  for (double x : w) ok = ok && std::isfinite(x);
  if (!ok) {
    std::string ws;
    for (double x : w) ws += (ws.empty() ? "" : ",") + json(x).dump();
    throw DataError("non-finite loss or weights at epoch " + std::to_string(epoch) + " (loss " +
                        json(loss).dump() + ", w [" + ws + "])",
                    "non_finite");
  }
}

template <typename LossFn>
TrainResult descend(const TrainConfig& config, Vec w, LossFn&& loss_fn) {
  if (config.epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(config.learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  TrainResult out;
  out.w_ref = w;
  for (int e = 0; e < config.epochs; ++e) {
    const auto lg = loss_fn(w);
    check_finite(lg.loss, w, e);
    out.loss_curve.push_back(lg.loss);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= config.learning_rate * lg.grad[k];
  }
  const auto last = loss_fn(w);
  check_finite(last.loss, w, config.epochs);
  out.loss_curve.push_back(last.loss);
  out.w = std::move(w);
  return out;
}

// Full-batch gradient descent on the SFT loss.
inline TrainResult train_sft(const TrainConfig& config, Vec w0, const std::vector<SftExample>& data) {
  return descend(config, std::move(w0), [&](const Vec& w) { return sft_loss_and_grad(w, data); });
}

// Full-batch gradient descent on the DPO loss; the reference is frozen at w0.
inline TrainResult train_dpo(const TrainConfig& config, Vec w0, const std::vector<DpoExample>& data) {
  if (!(config.beta > 0.0)) throw UsageError("beta must be > 0");
  const Vec ref = w0;
  return descend(config, std::move(w0), [&](const Vec& w) { return dpo_loss_and_grad(w, ref, data, config.beta); });
}

}  // namespace mpo::refopt
