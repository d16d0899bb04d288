#pragma once
#include "mcei/mlp.hpp"

namespace mcei {

// External standard-normal noise for reparameterized sampling; kept
// separate from the models so a draw can be shared across bound terms.
struct NoiseDraw {
    Mat delta; // dim x batch
    static NoiseDraw standard(RngStream &rng, int dim, int cols) {
        return NoiseDraw{rng.normal_mat(dim, cols)};
    }
};

double inv_softplus(double y);

// Diagonal Gaussian whose mean (and optionally scale) is a network of the
// conditioning variable. Scales pass through softplus and a positive floor,
// so they stay bounded away from zero by construction.
struct CondGaussian {
    Mlp mean_net;
    bool scale_is_net = false;
    Mlp scale_net; // outputs pre-softplus raw scales when scale_is_net
    Mat scale_raw; // out_dim x 1 pre-softplus otherwise
    double scale_floor = 1e-4;

    int cond_dim() const { return mean_net.in_dim(); }
    int out_dim() const { return mean_net.out_dim(); }

    static CondGaussian make_fixed_scale(int cond, const std::vector<int> &hidden, int out,
                                         Act hidden_act, double init_scale, double floor,
                                         RngStream &rng);
    static CondGaussian make_net_scale(int cond, const std::vector<int> &mean_hidden,
                                       const std::vector<int> &scale_hidden, int out,
                                       Act hidden_act, double floor, RngStream &rng);

    struct Heads {
        ad::Var mean;  // out x batch
        ad::Var scale; // out x batch or out x 1
    };

    Heads heads(ad::Tape &t, ad::Var cond);
    ad::Var sample(ad::Tape &t, const Heads &h, const Mat &delta);
    ad::Var sample(ad::Tape &t, ad::Var cond, const NoiseDraw &noise);

    // Per-column log density of value under N(mean, diag(scale^2)); 1 x batch.
    static ad::Var log_prob_cols(ad::Tape &t, const Heads &h, ad::Var value);
    ad::Var log_prob_cols(ad::Tape &t, ad::Var cond, ad::Var value);

    // Per-column differential entropy; 1 x batch (1 x 1 when the scale is shared).
    static ad::Var entropy_cols(ad::Tape &t, const Heads &h);

    // Tape-free counterparts.
    Mat mean_eval(const Mat &cond) const;
    Mat scale_eval(const Mat &cond) const; // out x batch or out x 1
    Mat sample_eval(const Mat &cond, const Mat &delta) const;
    Eigen::RowVectorXd log_prob_eval(const Mat &cond, const Mat &value) const;
    Eigen::RowVectorXd entropy_eval(const Mat &cond) const;

    void collect(std::vector<Mat *> &out);
};

// Shared-noise log density evaluated from explicit mean/scale matrices;
// scale may be (d x 1) and broadcasts over columns.
Eigen::RowVectorXd gaussian_log_prob(const Mat &mean, const Mat &scale, const Mat &value);

} // namespace mcei
