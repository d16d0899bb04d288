#include "mcei/ami_bounds.hpp"

#include "mcei/errors.hpp"

#include <cmath>

namespace mcei {

AuxFamily AuxFamily::make(int T, int D, double init_scale, double floor, RngStream &rng) {
    if (T < 2) throw ConfigError("AuxFamily::make: need at least two treatments");
    AuxFamily fam;
    fam.members.reserve(T);
    for (int i = 0; i < T; ++i) {
        RngStream sub = rng.derive(static_cast<std::uint64_t>(i));
        fam.members.push_back(
            CondGaussian::make_fixed_scale(T - 1, {}, D, Act::kIdentity, init_scale, floor, sub));
    }
    return fam;
}

void AuxFamily::collect(std::vector<Mat *> &out) {
    for (CondGaussian &m : members) m.collect(out);
}

Mat drop_row(const Mat &m, int i) {
    if (i < 0 || i >= m.rows()) throw std::invalid_argument("drop_row: index out of range");
    Mat out(m.rows() - 1, m.cols());
    if (i > 0) out.topRows(i) = m.topRows(i);
    if (i < m.rows() - 1) out.bottomRows(m.rows() - 1 - i) = m.bottomRows(m.rows() - 1 - i);
    return out;
}

ad::Var aux_bound_term(ad::Tape &t, const CondGaussian::Heads &enc_heads, ad::Var z,
                       CondGaussian &aux_i, const Mat &batch, int i) {
    ad::Var lp_enc = CondGaussian::log_prob_cols(t, enc_heads, z);
    ad::Var lp_aux = aux_i.log_prob_cols(t, t.leaf(drop_row(batch, i)), z);
    return t.mean(t.sub(lp_aux, lp_enc));
}

ad::Var aux_bound(ad::Tape &t, CondGaussian &encoder, AuxFamily &aux, const Mat &batch,
                  const NoiseDraw &noise, int i) {
    if (i < 0 || i >= aux.treatments())
        throw std::invalid_argument("aux_bound: treatment index out of range");
    if (batch.rows() != aux.treatments())
        throw std::invalid_argument("aux_bound: batch rows must equal the treatment count");
    CondGaussian::Heads h = encoder.heads(t, t.leaf(batch));
    ad::Var z = encoder.sample(t, h, noise.delta);
    return aux_bound_term(t, h, z, aux.members[i], batch, i);
}

ad::Var direct_entropy_bound(ad::Tape &t, CondGaussian &encoder, const Mat &batch,
                             const NoiseDraw &noise, int i, RngStream &perm_rng) {
    if (batch.cols() < 2)
        throw std::invalid_argument("direct_entropy_bound: batch needs at least two columns");
    if (i < 0 || i >= batch.rows())
        throw std::invalid_argument("direct_entropy_bound: treatment index out of range");
    CondGaussian::Heads h = encoder.heads(t, t.leaf(batch));
    ad::Var z = encoder.sample(t, h, noise.delta);

    Mat shuffled = batch;
    std::vector<int> p = perm_rng.permutation(static_cast<int>(batch.cols()));
    for (Eigen::Index j = 0; j < batch.cols(); ++j) shuffled(i, j) = batch(i, p[j]);

    CondGaussian::Heads hs = encoder.heads(t, t.leaf(shuffled));
    ad::Var lp = CondGaussian::log_prob_cols(t, hs, z);
    ad::Var ent = CondGaussian::entropy_cols(t, h);
    return t.add(t.mean(lp), t.mean(ent));
}

namespace {

double cond_logdet(const Mat &cov, int d_z, const std::vector<int> &t_idx) {
    const int k = static_cast<int>(t_idx.size());
    Mat czz = cov.topLeftCorner(d_z, d_z);
    if (k > 0) {
        Mat css(k, k);
        Mat czs(d_z, k);
        for (int a = 0; a < k; ++a) {
            czs.col(a) = cov.block(0, d_z + t_idx[a], d_z, 1);
            for (int b = 0; b < k; ++b) css(a, b) = cov(d_z + t_idx[a], d_z + t_idx[b]);
        }
        Eigen::LLT<Mat> llt(css);
        if (llt.info() != Eigen::Success)
            throw NumericError("gaussian_cmi: conditioning block is not positive definite");
        czz -= czs * llt.solve(czs.transpose());
    }
    Eigen::LLT<Mat> llt(czz);
    if (llt.info() != Eigen::Success)
        throw NumericError("gaussian_cmi: conditional covariance is not positive definite");
    return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

} // namespace

double gaussian_cmi(const Mat &joint_cov, int d_z, int i) {
    const int n = static_cast<int>(joint_cov.rows());
    const int T = n - d_z;
    if (joint_cov.cols() != n) throw std::invalid_argument("gaussian_cmi: covariance must be square");
    if (d_z <= 0 || T < 2)
        throw std::invalid_argument("gaussian_cmi: need a z block and at least two treatments");
    if (i < 0 || i >= T) throw std::invalid_argument("gaussian_cmi: treatment index out of range");
    if (!joint_cov.isApprox(joint_cov.transpose(), 1e-10))
        throw std::invalid_argument("gaussian_cmi: covariance must be symmetric");
    Eigen::LLT<Mat> llt(joint_cov);
    if (llt.info() != Eigen::Success)
        throw NumericError("gaussian_cmi: joint covariance is not positive definite");

    std::vector<int> all, rest;
    for (int k = 0; k < T; ++k) {
        all.push_back(k);
        if (k != i) rest.push_back(k);
    }
    return 0.5 * (cond_logdet(joint_cov, d_z, rest) - cond_logdet(joint_cov, d_z, all));
}

BoundEstimate aux_bound_estimate(const CondGaussian &encoder, const CondGaussian &aux_i,
                                 const Mat &t_cols, int i, RngStream &rng, int samples) {
    const int B = static_cast<int>(t_cols.cols());
    const int D = encoder.out_dim();
    Mat enc_mean = encoder.mean_eval(t_cols);
    Mat enc_scale = encoder.scale_eval(t_cols);
    Mat rest = drop_row(t_cols, i);
    Mat aux_mean = aux_i.mean_eval(rest);
    Mat aux_scale = aux_i.scale_eval(rest);

    Eigen::RowVectorXd per_col = Eigen::RowVectorXd::Zero(B);
    for (int s = 0; s < samples; ++s) {
        Mat delta = rng.normal_mat(D, B);
        Mat z = (enc_scale.cols() == B)
                    ? Mat(enc_mean + (enc_scale.array() * delta.array()).matrix())
                    : Mat(enc_mean + (delta.array().colwise() * enc_scale.col(0).array()).matrix());
        Eigen::RowVectorXd lp_enc = gaussian_log_prob(enc_mean, enc_scale, z);
        Eigen::RowVectorXd lp_aux = gaussian_log_prob(aux_mean, aux_scale, z);
        per_col += lp_aux - lp_enc;
    }
    per_col /= static_cast<double>(samples);

    BoundEstimate est;
    est.value = per_col.mean();
    est.stderr_ = std::sqrt((per_col.array() - est.value).square().sum() /
                            (static_cast<double>(B) * std::max(1.0, B - 1.0)));
    return est;
}

Vec ami_estimates(const CondGaussian &encoder, const AuxFamily &aux, const Mat &t_cols,
                  RngStream &rng, int samples) {
    Vec out(aux.treatments());
    for (int i = 0; i < aux.treatments(); ++i) {
        RngStream sub = rng.derive(static_cast<std::uint64_t>(i));
        out(i) = -aux_bound_estimate(encoder, aux.members[i], t_cols, i, sub, samples).value;
    }
    return out;
}

} // namespace mcei
