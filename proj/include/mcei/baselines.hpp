#pragma once
#include "mcei/dataset.hpp"

namespace mcei {

// Probabilistic PCA of the treatment block: t = W z + noise with
// z ~ N(0, prior_var I) and isotropic noise. Fitted by eigendecomposition,
// which is the exact maximizer of the marginal likelihood.
struct PpcaModel {
    Mat W; // T x D
    double noise_var = 1.0;
    double prior_var = 1.0;
    Vec col_means; // length T, zero for synthetic constructions

    int treatments() const { return static_cast<int>(W.rows()); }
    int dim() const { return static_cast<int>(W.cols()); }
};

PpcaModel fit_ppca(const Mat &t_rows, int D);
PpcaModel fit_ppca_fixed_noise(const Mat &t_rows, int D, double noise_var);
// Covariance-input variants; col_means left at zero.
PpcaModel fit_ppca_from_cov(const Mat &cov, int D);
PpcaModel fit_ppca_from_cov_fixed_noise(const Mat &cov, int D, double noise_var);

struct GaussianPosterior {
    Vec mean;
    Mat cov;
};

// Exact posterior over z given one observation row (linear-Gaussian identity).
GaussianPosterior ppca_posterior(const PpcaModel &model, const Vec &t_row);

// Posterior means for every row at once, N x D.
Mat ppca_posterior_means(const PpcaModel &model, const Mat &t_rows);

// Average per-row marginal log likelihood under the model.
double ppca_avg_loglik(const PpcaModel &model, const Mat &t_rows);

struct RegressResult {
    Vec effects; // per-treatment coefficients
    bool ridge_used = false;
};

enum class PcaRegressMode {
    kJoint,        // y on [1, E(z|t), t], report the t block
    kResidualized, // partial out E(z|t) from y and t first, then regress
};

// PCA-corrected outcome regression. The joint mode mirrors the criticized
// baseline: with t present the fit may ignore the confounder entirely.
RegressResult pca_correct_regress(const Dataset &data, int D,
                                  PcaRegressMode mode = PcaRegressMode::kJoint);

// Ordinary least squares of y on the raw treatments.
RegressResult naive_regress(const Dataset &data);

} // namespace mcei
