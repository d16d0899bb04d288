#pragma once
#include "mcei/gaussian.hpp"

namespace mcei {

// Leave-one-out conditionals r_i(z | t_{-i}); member i conditions on the
// batch with row i removed. Linear means with learned diagonal scales.
struct AuxFamily {
    std::vector<CondGaussian> members;

    int treatments() const { return static_cast<int>(members.size()); }
    int confounder_dim() const { return members.empty() ? 0 : members.front().out_dim(); }

    static AuxFamily make(int T, int D, double init_scale, double floor, RngStream &rng);
    void collect(std::vector<Mat *> &out);
};

Mat drop_row(const Mat &m, int i);

// Per-sample bound term G_i = E[log r_i(z | t_{-i}) - log p(z | t)] with the
// expectation over the batch columns and the shared reparameterized z. For
// any r_i this lower-bounds the negated leave-one-out information
// -I(t_i ; z | t_{-i}) of the joint induced by the encoder, with equality
// when r_i recovers the exact leave-one-out conditional.
ad::Var aux_bound_term(ad::Tape &t, const CondGaussian::Heads &enc_heads, ad::Var z,
                       CondGaussian &aux_i, const Mat &batch, int i);

ad::Var aux_bound(ad::Tape &t, CondGaussian &encoder, AuxFamily &aux, const Mat &batch,
                  const NoiseDraw &noise, int i);

// Permutation variant: E[log p(z | t_{-i}, perm(t_i))] + E[H(p(. | t))].
// Shares the encoder sample z; drops the additive marginal-entropy constant,
// so values are comparable only across encoders, not to the oracle.
ad::Var direct_entropy_bound(ad::Tape &t, CondGaussian &encoder, const Mat &batch,
                             const NoiseDraw &noise, int i, RngStream &perm_rng);

// Conditional information I(t_i ; z | t_rest) of a jointly Gaussian vector
// ordered (z block first, then treatments), from Schur-complement log-dets.
double gaussian_cmi(const Mat &joint_cov, int d_z, int i);

struct BoundEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

// Monte Carlo estimate of G_i over the columns of t_cols, sampling
// `samples` z draws per column; the standard error is over columns.
BoundEstimate aux_bound_estimate(const CondGaussian &encoder, const CondGaussian &aux_i,
                                 const Mat &t_cols, int i, RngStream &rng, int samples = 4);

// Negated bounds, one per treatment: the model-side information estimates.
Vec ami_estimates(const CondGaussian &encoder, const AuxFamily &aux, const Mat &t_cols,
                  RngStream &rng, int samples = 4);

} // namespace mcei
