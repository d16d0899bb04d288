#include "mcei/gaussian.hpp"

#include "mcei/errors.hpp"

#include <cmath>

namespace mcei {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kLog2PiE = 2.8378770664093454835606594728112353;

double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
} // namespace

double inv_softplus(double y) {
    if (y <= 0.0) throw ConfigError("inv_softplus: argument must be positive");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

CondGaussian CondGaussian::make_fixed_scale(int cond, const std::vector<int> &hidden, int out,
                                            Act hidden_act, double init_scale, double floor,
                                            RngStream &rng) {
    if (init_scale <= floor)
        throw ConfigError("CondGaussian: initial scale must exceed the floor");
    CondGaussian g;
    g.mean_net = Mlp::make(cond, hidden, out, hidden_act, Act::kIdentity, rng);
    g.scale_is_net = false;
    g.scale_raw = Mat::Constant(out, 1, inv_softplus(init_scale - floor));
    g.scale_floor = floor;
    return g;
}

CondGaussian CondGaussian::make_net_scale(int cond, const std::vector<int> &mean_hidden,
                                          const std::vector<int> &scale_hidden, int out,
                                          Act hidden_act, double floor, RngStream &rng) {
    CondGaussian g;
    g.mean_net = Mlp::make(cond, mean_hidden, out, hidden_act, Act::kIdentity, rng);
    g.scale_is_net = true;
    g.scale_net = Mlp::make(cond, scale_hidden, out, hidden_act, Act::kIdentity, rng);
    g.scale_floor = floor;
    return g;
}

CondGaussian::Heads CondGaussian::heads(ad::Tape &t, ad::Var cond) {
    Heads h;
    h.mean = mean_net.apply(t, cond);
    ad::Var raw = scale_is_net ? scale_net.apply(t, cond) : t.param(scale_raw);
    h.scale = t.shift(t.softplus(raw), scale_floor);
    return h;
}

ad::Var CondGaussian::sample(ad::Tape &t, const Heads &h, const Mat &delta) {
    const Mat &m = t.val(h.mean);
    if (delta.rows() != m.rows() || delta.cols() != m.cols())
        throw std::invalid_argument("CondGaussian::sample: noise shape " +
                                    std::to_string(delta.rows()) + "x" +
                                    std::to_string(delta.cols()) + " does not match mean " +
                                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    return t.add(h.mean, t.mul(h.scale, t.leaf(delta)));
}

ad::Var CondGaussian::sample(ad::Tape &t, ad::Var cond, const NoiseDraw &noise) {
    Heads h = heads(t, cond);
    return sample(t, h, noise.delta);
}

ad::Var CondGaussian::log_prob_cols(ad::Tape &t, const Heads &h, ad::Var value) {
    // Copy the shape up front: recording ops below may reallocate the node
    // store and invalidate references returned by val().
    const Eigen::Index rows = t.val(h.mean).rows();
    const Eigen::Index cols = t.val(h.mean).cols();
    if (t.val(value).rows() != rows || t.val(value).cols() != cols)
        throw std::invalid_argument("CondGaussian::log_prob_cols: value shape mismatch");
    ad::Var w = t.div(t.sub(value, h.mean), h.scale);
    ad::Var per = t.add(t.log(h.scale), t.scale(t.square(w), 0.5));
    return t.shift(t.scale(t.colsum(per), -1.0), -0.5 * kLog2Pi * static_cast<double>(rows));
}

ad::Var CondGaussian::log_prob_cols(ad::Tape &t, ad::Var cond, ad::Var value) {
    Heads h = heads(t, cond);
    return log_prob_cols(t, h, value);
}

ad::Var CondGaussian::entropy_cols(ad::Tape &t, const Heads &h) {
    const double d = static_cast<double>(t.val(h.mean).rows());
    return t.shift(t.colsum(t.log(h.scale)), 0.5 * kLog2PiE * d);
}

Mat CondGaussian::mean_eval(const Mat &cond) const { return mean_net.eval(cond); }

Mat CondGaussian::scale_eval(const Mat &cond) const {
    Mat raw = scale_is_net ? scale_net.eval(cond) : scale_raw;
    return raw.unaryExpr([&](double x) { return softplus_scalar(x) + scale_floor; });
}

Mat CondGaussian::sample_eval(const Mat &cond, const Mat &delta) const {
    Mat m = mean_eval(cond);
    if (delta.rows() != m.rows() || delta.cols() != m.cols())
        throw std::invalid_argument("CondGaussian::sample_eval: noise shape mismatch");
    Mat s = scale_eval(cond);
    if (s.cols() == m.cols()) return m + (s.array() * delta.array()).matrix();
    return m + (delta.array().colwise() * s.col(0).array()).matrix();
}

Eigen::RowVectorXd CondGaussian::log_prob_eval(const Mat &cond, const Mat &value) const {
    return gaussian_log_prob(mean_eval(cond), scale_eval(cond), value);
}

Eigen::RowVectorXd CondGaussian::entropy_eval(const Mat &cond) const {
    Mat s = scale_eval(cond);
    const double base = 0.5 * kLog2PiE * static_cast<double>(out_dim());
    Eigen::RowVectorXd h = s.array().log().colwise().sum().matrix();
    if (s.cols() == 1 && cond.cols() > 1)
        return Eigen::RowVectorXd::Constant(cond.cols(), h(0) + base);
    return (h.array() + base).matrix();
}

void CondGaussian::collect(std::vector<Mat *> &out) {
    mean_net.collect(out);
    if (scale_is_net)
        scale_net.collect(out);
    else
        out.push_back(&scale_raw);
}

Eigen::RowVectorXd gaussian_log_prob(const Mat &mean, const Mat &scale, const Mat &value) {
    if (value.rows() != mean.rows() || value.cols() != mean.cols())
        throw std::invalid_argument("gaussian_log_prob: value shape mismatch");
    if ((scale.array() <= 0.0).any())
        throw std::invalid_argument("gaussian_log_prob: scales must be positive");
    Mat s = (scale.cols() == mean.cols()) ? scale : Mat(scale.replicate(1, mean.cols()));
    Eigen::ArrayXXd w = (value - mean).array() / s.array();
    Eigen::RowVectorXd out = -(s.array().log() + 0.5 * w.square()).colwise().sum().matrix();
    return (out.array() - 0.5 * kLog2Pi * static_cast<double>(mean.rows())).matrix();
}

} // namespace mcei
