#pragma once

// Posterior sampler for the DAG auto-regressive Wishart tensor field.
//
// Model:
//   log S_mv ~ N(log S0_v - b g_m^T A_v g_m, sigma^2)
//   A_v | parents ~ W(mean of parent tensors, k)   (W(I, k) at roots)
//   k ~ U(3, 50), 1/sigma^2 ~ Gamma(0.01, 0.01)
//
// One sweep visits every voxel with a single-site Metropolis-Hastings step
// (proposal W(A_v, q)), then draws sigma^2 by Gibbs and k by a log-normal
// random walk. q is adapted toward the target acceptance during burn-in only.

#include <spdist/baseline_ls.hpp>
#include <spdist/errors.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/rng.hpp>
#include <spdist/signal_model.hpp>
#include <spdist/tensor_math.hpp>
#include <spdist/wishart.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace spdist {

inline constexpr double kDofMin = 3.0;
inline constexpr double kDofMax = 50.0;
inline constexpr double kPrecisionPriorShape = 0.01;
inline constexpr double kPrecisionPriorRate = 0.01;
inline constexpr double kProposalDofMin = 2.5;
inline constexpr double kProposalDofMax = 1e6;

struct SamplerConfig {
    std::size_t burn_in = 3000;
    std::size_t retained = 2000;
    std::size_t thin = 10;
    double target_accept = 0.4;
    std::uint64_t seed = 1;

    double initial_q = 100.0;
    std::size_t tune_batch = 50; // sweeps per adaptation batch
    double tune_gain = 10.0;     // c in gamma_t = c / t
    double k_step = 0.1;         // sd of log k' - log k
    double k_init = 10.0;
    bool random_scan = false;
    bool keep_draws = true;

    static SamplerConfig desk() { return {}; }
    static SamplerConfig paper() {
        SamplerConfig c;
        c.thin = 100;
        return c;
    }

    std::size_t total_sweeps() const { return burn_in + retained * thin; }

    void validate() const {
        if (burn_in < 1 || retained < 1 || thin < 1 || tune_batch < 1)
            throw ConfigError("sampler: burn_in, retained, thin and tune_batch must be >= 1");
        if (!(target_accept > 0.0 && target_accept < 1.0))
            throw ConfigError("sampler.target_accept: must lie in (0, 1)");
        if (!(initial_q > kProposalDofMin && initial_q < kProposalDofMax))
            throw ConfigError("sampler.initial_q: must lie in (2.5, 1e6)");
        if (!(k_init > kDofMin && k_init < kDofMax)) throw ConfigError("sampler.k_init: must lie in (3, 50)");
        if (!(k_step > 0.0)) throw ConfigError("sampler.k_step: must be positive");
        if (!(tune_gain > 0.0)) throw ConfigError("sampler.tune_gain: must be positive");
    }
};

struct ChainState {
    std::vector<SpdMatrix3> tensors;
    double sigma2 = 1.0;
    double k = 10.0;
    double q = 100.0;
};

// Mean of the parent tensors, or the identity for a root.
inline SpdMatrix3 parent_mean(VoxelId v, const std::vector<SpdMatrix3>& tensors, const VoxelGraph& graph) {
    const auto& parents = graph.parents(v);
    if (parents.empty()) return SpdMatrix3();
    SymMatrix3 s;
    for (VoxelId u : parents) s += tensors[u].matrix();
    return SpdMatrix3((1.0 / static_cast<double>(parents.size())) * s);
}

// log p(A_1..A_n | k) + log p(data | A, sigma^2): the tensor-dependent part of
// the joint density.
inline double log_joint(const ChainState& state, const DwiDataset& data, const VoxelGraph& graph) {
    double s = 0.0;
    for (VoxelId v = 0; v < graph.size(); ++v) {
        s += voxel_log_likelihood(state.tensors[v], v, data, state.sigma2);
        s += wishart_logpdf(state.tensors[v], parent_mean(v, state.tensors, graph), state.k);
    }
    return s;
}

// Everything about the neighborhood of site v that stays fixed while A_v
// changes: the prior mean from v's parents, and for each child the sum of its
// other parents.
class SiteContext {
public:
    SiteContext(VoxelId v, const ChainState& state, const DwiDataset& data, const VoxelGraph& graph)
        : v_(v), state_(state), data_(data), prior_mean_(parent_mean(v, state.tensors, graph)) {
        for (VoxelId u : graph.children(v)) {
            Child c{u, {}, 1.0 / static_cast<double>(graph.parents(u).size())};
            for (VoxelId w : graph.parents(u))
                if (w != v) c.others += state.tensors[w].matrix();
            children_.push_back(c);
        }
    }

    double log_target(const SpdMatrix3& a) const {
        double s = voxel_log_likelihood(a, v_, data_, state_.sigma2);
        s += wishart_logpdf(a, prior_mean_, state_.k);
        for (const Child& c : children_) {
            // A child's mean divides by its own parent count.
            const SpdMatrix3 mean(c.inv_count * (c.others + a.matrix()));
            s += wishart_logpdf(state_.tensors[c.id], mean, state_.k);
        }
        return s;
    }

    std::size_t child_terms() const { return children_.size(); }

private:
    struct Child {
        VoxelId id;
        SymMatrix3 others;
        double inv_count;
    };

    VoxelId v_;
    const ChainState& state_;
    const DwiDataset& data_;
    SpdMatrix3 prior_mean_;
    std::vector<Child> children_;
};

inline double conditional_log_target(const SpdMatrix3& a_star, VoxelId v, const ChainState& state,
                                     const DwiDataset& data, const VoxelGraph& graph) {
    return SiteContext(v, state, data, graph).log_target(a_star);
}

// log r for moving A_v from its current value to `proposal` under the
// proposal kernel W(. | A, q).
inline double site_log_acceptance_ratio(const SiteContext& ctx, const SpdMatrix3& current,
                                        const SpdMatrix3& proposal, double q) {
    return ctx.log_target(proposal) - ctx.log_target(current) + wishart_logpdf(current, proposal, q) -
           wishart_logpdf(proposal, current, q);
}

inline double site_log_acceptance_ratio(VoxelId v, const SpdMatrix3& proposal, const ChainState& state,
                                        const DwiDataset& data, const VoxelGraph& graph) {
    const SiteContext ctx(v, state, data, graph);
    return site_log_acceptance_ratio(ctx, state.tensors[v], proposal, state.q);
}

inline bool update_tensor_site(VoxelId v, ChainState& state, const DwiDataset& data, const VoxelGraph& graph, Rng& rng) {
    const SpdMatrix3& current = state.tensors[v];
    const auto proposal = try_sample_wishart(current, state.q, rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (!proposal) return false;
    const SiteContext ctx(v, state, data, graph);
    const double log_r = site_log_acceptance_ratio(ctx, current, *proposal, state.q);
    if (std::log(u) < log_r) {
        state.tensors[v] = *proposal;
        return true;
    }
    return false;
}

struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;
};

// Full conditional of the noise precision 1/sigma^2.
inline GammaParams precision_posterior(const ChainState& state, const DwiDataset& data) {
    double ssr = 0.0;
    for (VoxelId v = 0; v < data.voxels(); ++v) ssr += voxel_ssr(state.tensors[v].matrix(), v, data);
    const double mn = static_cast<double>(data.measurements() * data.voxels());
    return {0.5 * mn + kPrecisionPriorShape, 0.5 * ssr + kPrecisionPriorRate};
}

inline void update_sigma2(ChainState& state, const DwiDataset& data, Rng& rng) {
    const GammaParams p = precision_posterior(state, data);
    const double precision = std::gamma_distribution<double>(p.shape, 1.0 / p.rate)(rng);
    state.sigma2 = 1.0 / precision;
}

// Per-voxel sufficient statistics of the prior at the current tensors, so
// the dof update can evaluate the prior at any k.
inline std::vector<WishartStats> prior_stats(const ChainState& state, const VoxelGraph& graph) {
    std::vector<WishartStats> out(graph.size());
    for (VoxelId v = 0; v < graph.size(); ++v)
        out[v] = WishartStats::of(state.tensors[v], parent_mean(v, state.tensors, graph));
    return out;
}

inline double prior_log_density(const std::vector<WishartStats>& stats, double k) {
    double s = 0.0;
    for (const WishartStats& w : stats) s += w.log_pdf(k);
    return s;
}

// log acceptance ratio for k -> k_new under the log-normal random walk,
// including the k_new / k proposal Jacobian. -inf outside (3, 50).
inline double k_log_acceptance_ratio(const std::vector<WishartStats>& stats, double k, double k_new) {
    if (!(k_new > kDofMin && k_new < kDofMax)) return -std::numeric_limits<double>::infinity();
    return prior_log_density(stats, k_new) - prior_log_density(stats, k) + std::log(k_new / k);
}

inline bool update_k(ChainState& state, const VoxelGraph& graph, Rng& rng, double step = 0.1) {
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double k_new = state.k * std::exp(step * z);
    if (!(k_new > kDofMin && k_new < kDofMax)) return false;
    const double log_r = k_log_acceptance_ratio(prior_stats(state, graph), state.k, k_new);
    if (std::log(u) < log_r) {
        state.k = k_new;
        return true;
    }
    return false;
}

// Robbins-Monro update on log q with gain c / t: a batch rate below target
// raises q (smaller steps, more acceptances), above target lowers it.
inline double tune_proposal_dof(double q, double batch_rate, std::size_t batch_index, double gain = 10.0,
                                double target = 0.4) {
    const double step = gain / static_cast<double>(std::max<std::size_t>(batch_index, 1));
    const double log_q = std::log(q) + step * (target - batch_rate);
    return std::clamp(std::exp(log_q), kProposalDofMin, kProposalDofMax);
}

class ProposalTuner {
public:
    ProposalTuner(double q, double gain, double target) : q_(q), gain_(gain), target_(target) {}

    double update(double batch_rate) {
        q_ = tune_proposal_dof(q_, batch_rate, ++batches_, gain_, target_);
        return q_;
    }
    double q() const { return q_; }
    std::size_t batches() const { return batches_; }

private:
    double q_;
    double gain_;
    double target_;
    std::size_t batches_ = 0;
};

struct PosteriorDraws {
    GridDims dims;
    std::size_t voxels = 0;
    // Draw-major: draw t, voxel v at t * voxels + v. Empty if keep_draws is off.
    std::vector<SymMatrix3> tensors;
    std::vector<double> sigma2;
    std::vector<double> k;
    // 1-based sweep numbers the draws were taken at.
    std::vector<std::size_t> sweep_index;
    // Entrywise mean over retained draws.
    std::vector<SymMatrix3> posterior_mean;

    // Post-burn-in acceptance diagnostics.
    std::vector<double> site_acceptance;
    double k_acceptance = 0.0;
    double tuned_q = 0.0;

    std::size_t draw_count() const { return sweep_index.size(); }
    const SymMatrix3& tensor(std::size_t t, VoxelId v) const { return tensors[t * voxels + v]; }
    double mean_acceptance() const {
        if (site_acceptance.empty()) return 0.0;
        return std::accumulate(site_acceptance.begin(), site_acceptance.end(), 0.0) /
               static_cast<double>(site_acceptance.size());
    }

    friend bool operator==(const PosteriorDraws&, const PosteriorDraws&) = default;
};

// Warm start: projected least-squares tensors, sigma^2 at the LS residual
// variance, k and q from the config.
inline ChainState initial_state(const DwiDataset& data, const SamplerConfig& config) {
    const LeastSquaresFitter fitter(data.protocol());
    const std::vector<SymMatrix3> ls = fitter.fit_all(data);
    ChainState s;
    s.tensors.reserve(ls.size());
    for (const SymMatrix3& a : ls) s.tensors.push_back(project_to_pd(a));
    const std::size_t m = data.measurements(), n = data.voxels();
    const double dof = static_cast<double>(n * (m > 6 ? m - 6 : m));
    s.sigma2 = std::max(total_ssr(ls, data) / dof, 1e-10);
    s.k = config.k_init;
    s.q = config.initial_q;
    return s;
}

using SweepCallback = std::function<void(std::size_t sweep, const ChainState&)>;

inline PosteriorDraws run_chain(const DwiDataset& data, const VoxelGraph& graph, const SamplerConfig& config,
                                ChainState state, Rng& rng, const SweepCallback& on_sweep = {}) {
    config.validate();
    if (graph.dims() != data.dims()) throw ConfigError("sampler: graph and dataset grids differ");
    const std::size_t n = data.voxels();

    PosteriorDraws out;
    out.dims = data.dims();
    out.voxels = n;
    out.posterior_mean.assign(n, SymMatrix3{});
    if (config.keep_draws) out.tensors.reserve(config.retained * n);
    out.sigma2.reserve(config.retained);
    out.k.reserve(config.retained);
    out.sweep_index.reserve(config.retained);

    ProposalTuner tuner(state.q, config.tune_gain, config.target_accept);
    std::vector<VoxelId> order(n);
    std::iota(order.begin(), order.end(), VoxelId{0});
    std::vector<std::size_t> site_accepts(n, 0);
    std::size_t batch_accepts = 0, k_accepts = 0;

    const std::size_t total = config.total_sweeps();
    for (std::size_t sweep = 1; sweep <= total; ++sweep) {
        const bool burning = sweep <= config.burn_in;
        if (config.random_scan) std::shuffle(order.begin(), order.end(), rng);
        for (VoxelId v : order) {
            const bool accepted = update_tensor_site(v, state, data, graph, rng);
            if (burning) batch_accepts += accepted;
            else site_accepts[v] += accepted;
        }
        update_sigma2(state, data, rng);
        const bool k_accepted = update_k(state, graph, rng, config.k_step);
        if (!burning) k_accepts += k_accepted;

        if (burning && sweep % config.tune_batch == 0) {
            const double rate = static_cast<double>(batch_accepts) / static_cast<double>(config.tune_batch * n);
            state.q = tuner.update(rate);
            batch_accepts = 0;
        }

        if (!burning && (sweep - config.burn_in) % config.thin == 0) {
            for (VoxelId v = 0; v < n; ++v) {
                const SymMatrix3& a = state.tensors[v].matrix();
                if (config.keep_draws) out.tensors.push_back(a);
                out.posterior_mean[v] += a;
            }
            out.sigma2.push_back(state.sigma2);
            out.k.push_back(state.k);
            out.sweep_index.push_back(sweep);
        }
        if (on_sweep) on_sweep(sweep, state);
    }

    const double kept = static_cast<double>(out.sweep_index.size());
    for (SymMatrix3& a : out.posterior_mean) a = (1.0 / kept) * a;
    const double post = static_cast<double>(total - config.burn_in);
    out.site_acceptance.resize(n);
    for (VoxelId v = 0; v < n; ++v) out.site_acceptance[v] = static_cast<double>(site_accepts[v]) / post;
    out.k_acceptance = static_cast<double>(k_accepts) / post;
    out.tuned_q = state.q;
    return out;
}

inline PosteriorDraws run_chain(const DwiDataset& data, const VoxelGraph& graph, const SamplerConfig& config) {
    Rng rng(config.seed);
    return run_chain(data, graph, config, initial_state(data, config), rng);
}

// Draw a tensor field from the DAG prior with dof k, in rank order.
inline std::vector<SpdMatrix3> sample_dag_field(const VoxelGraph& graph, double k, Rng& rng) {
    std::vector<SpdMatrix3> field(graph.size());
    for (VoxelId v = 0; v < graph.size(); ++v) field[v] = sample_wishart(parent_mean(v, field, graph), k, rng);
    return field;
}

} // namespace spdist
