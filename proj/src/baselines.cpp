#include "mcei/baselines.hpp"
#include "mcei/errors.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace mcei {

namespace {

Mat sample_cov(const Mat &t_rows, Vec &means_out) {
    const int N = static_cast<int>(t_rows.rows());
    if (N < 2) throw DataError("need at least two rows to fit a covariance");
    means_out = t_rows.colwise().mean();
    Mat centered = t_rows.rowwise() - means_out.transpose();
    return centered.transpose() * centered / static_cast<double>(N);
}

PpcaModel ppca_from_eigs(const Mat &cov, int D, double noise_var, bool noise_given) {
    const int T = static_cast<int>(cov.rows());
    if (cov.cols() != T) throw DataError("covariance must be square");
    if (D < 1) throw ConfigError("component count must be at least 1");
    if (D >= T && !noise_given) throw ConfigError("component count must be below the treatment count");
    if (D > T) throw ConfigError("component count exceeds the treatment count");

    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    // Eigen orders ascending; walk from the top.
    Vec lam = eig.eigenvalues();
    Mat U = eig.eigenvectors();

    PpcaModel model;
    if (!noise_given) {
        double resid = 0.0;
        for (int j = 0; j < T - D; ++j) resid += lam(j);
        noise_var = std::max(resid / static_cast<double>(T - D), 1e-12);
    }
    model.noise_var = noise_var;
    model.prior_var = 1.0;
    model.W = Mat::Zero(T, D);
    for (int k = 0; k < D; ++k) {
        double l = lam(T - 1 - k);
        model.W.col(k) = U.col(T - 1 - k) * std::sqrt(std::max(l - noise_var, 0.0));
    }
    model.col_means = Vec::Zero(T);
    return model;
}

} // namespace

PpcaModel fit_ppca(const Mat &t_rows, int D) {
    Vec means;
    Mat S = sample_cov(t_rows, means);
    PpcaModel model = ppca_from_eigs(S, D, 0.0, false);
    model.col_means = means;
    return model;
}

PpcaModel fit_ppca_fixed_noise(const Mat &t_rows, int D, double noise_var) {
    if (noise_var <= 0.0) throw ConfigError("noise_var must be positive");
    Vec means;
    Mat S = sample_cov(t_rows, means);
    PpcaModel model = ppca_from_eigs(S, D, noise_var, true);
    model.col_means = means;
    return model;
}

PpcaModel fit_ppca_from_cov(const Mat &cov, int D) { return ppca_from_eigs(cov, D, 0.0, false); }

PpcaModel fit_ppca_from_cov_fixed_noise(const Mat &cov, int D, double noise_var) {
    if (noise_var <= 0.0) throw ConfigError("noise_var must be positive");
    return ppca_from_eigs(cov, D, noise_var, true);
}

GaussianPosterior ppca_posterior(const PpcaModel &model, const Vec &t_row) {
    if (t_row.size() != model.treatments()) throw DataError("observation size mismatch");
    if (model.noise_var <= 0.0 || model.prior_var <= 0.0)
        throw ConfigError("ppca variances must be positive");
    const int D = model.dim();
    Vec tc = model.col_means.size() == t_row.size() ? Vec(t_row - model.col_means) : t_row;
    Mat A = model.W.transpose() * model.W / model.noise_var +
            Mat::Identity(D, D) / model.prior_var;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError("posterior precision is not positive definite");
    GaussianPosterior post;
    post.cov = llt.solve(Mat::Identity(D, D));
    post.mean = llt.solve(model.W.transpose() * tc / model.noise_var);
    return post;
}

Mat ppca_posterior_means(const PpcaModel &model, const Mat &t_rows) {
    if (t_rows.cols() != model.treatments()) throw DataError("observation size mismatch");
    const int D = model.dim();
    Mat A = model.W.transpose() * model.W / model.noise_var +
            Mat::Identity(D, D) / model.prior_var;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError("posterior precision is not positive definite");
    Mat centered = t_rows.rowwise() - model.col_means.transpose();
    return llt.solve(model.W.transpose() * centered.transpose() / model.noise_var).transpose();
}

double ppca_avg_loglik(const PpcaModel &model, const Mat &t_rows) {
    const int T = model.treatments();
    const int N = static_cast<int>(t_rows.rows());
    if (N < 1) throw DataError("need rows to evaluate the likelihood");
    Mat C = model.prior_var * model.W * model.W.transpose() +
            model.noise_var * Mat::Identity(T, T);
    Eigen::LLT<Mat> llt(C);
    if (llt.info() != Eigen::Success) throw NumericError("model covariance is not positive definite");
    double logdet = 0.0;
    for (int i = 0; i < T; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    Mat centered = t_rows.rowwise() - model.col_means.transpose();
    double quad = (centered.array() * llt.solve(centered.transpose()).transpose().array()).sum() /
                  static_cast<double>(N);
    return -0.5 * (T * std::log(2.0 * M_PI) + logdet + quad);
}

namespace {

// OLS with a rank check; rank-deficient designs refit with a small ridge.
Vec solve_ls(const Mat &X, const Vec &y, bool &ridge_used) {
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    if (qr.rank() == X.cols()) {
        ridge_used = false;
        return qr.solve(y);
    }
    ridge_used = true;
    Mat gram = X.transpose() * X + 1e-6 * Mat::Identity(X.cols(), X.cols());
    return Eigen::LDLT<Mat>(gram).solve(X.transpose() * y);
}

} // namespace

RegressResult pca_correct_regress(const Dataset &data, int D, PcaRegressMode mode) {
    if (!data.has_outcome()) throw DataError("outcome column is required");
    data.require_complete();
    const int N = data.n(), T = data.treatments();
    if (D == 0) return naive_regress(data); // no confounder axes, nothing to correct

    PpcaModel model = fit_ppca(data.t, D);
    Mat ez = ppca_posterior_means(model, data.t); // N x D

    RegressResult res;
    if (mode == PcaRegressMode::kJoint) {
        Mat X(N, 1 + D + T);
        X.col(0).setOnes();
        X.middleCols(1, D) = ez;
        X.rightCols(T) = data.t;
        Vec coef = solve_ls(X, data.y, res.ridge_used);
        res.effects = coef.tail(T);
    } else {
        // Partial the posterior means out of y and every treatment column,
        // then regress the residualized outcome on the residualized block.
        Mat Z(N, 1 + D);
        Z.col(0).setOnes();
        Z.rightCols(D) = ez;
        bool rz = false;
        Vec yr = data.y - Z * solve_ls(Z, data.y, rz);
        Mat tr(N, T);
        for (int i = 0; i < T; ++i) {
            bool rt = false;
            tr.col(i) = data.t.col(i) - Z * solve_ls(Z, Vec(data.t.col(i)), rt);
            rz = rz || rt;
        }
        Mat X(N, 1 + T);
        X.col(0).setOnes();
        X.rightCols(T) = tr;
        bool rx = false;
        Vec coef = solve_ls(X, yr, rx);
        res.ridge_used = rz || rx;
        res.effects = coef.tail(T);
    }
    return res;
}

RegressResult naive_regress(const Dataset &data) {
    if (!data.has_outcome()) throw DataError("outcome column is required");
    data.require_complete();
    const int N = data.n(), T = data.treatments();
    Mat X(N, 1 + T);
    X.col(0).setOnes();
    X.rightCols(T) = data.t;
    RegressResult res;
    Vec coef = solve_ls(X, data.y, res.ridge_used);
    res.effects = coef.tail(T);
    return res;
}

} // namespace mcei
