#include "mcei/mlp.hpp"

#include "mcei/errors.hpp"

#include <cmath>

namespace mcei {

std::string act_name(Act a) {
    switch (a) {
    case Act::kIdentity: return "identity";
    case Act::kTanh: return "tanh";
    case Act::kRelu: return "relu";
    case Act::kSoftplus: return "softplus";
    }
    return "identity";
}

Act act_from_name(const std::string &s) {
    if (s == "identity") return Act::kIdentity;
    if (s == "tanh") return Act::kTanh;
    if (s == "relu") return Act::kRelu;
    if (s == "softplus") return Act::kSoftplus;
    throw ConfigError("unknown activation name: " + s);
}

Mlp Mlp::make(int in, const std::vector<int> &hidden, int out, Act hidden_act, Act out_act,
              RngStream &rng) {
    if (in <= 0 || out <= 0) throw ConfigError("Mlp::make: dimensions must be positive");
    Mlp net;
    std::vector<int> dims;
    dims.push_back(in);
    for (int h : hidden) {
        if (h <= 0) throw ConfigError("Mlp::make: hidden width must be positive");
        dims.push_back(h);
    }
    dims.push_back(out);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Dense d;
        const int ni = dims[l], no = dims[l + 1];
        const double lim = std::sqrt(6.0 / static_cast<double>(ni + no));
        d.W.resize(no, ni);
        for (int j = 0; j < ni; ++j)
            for (int i = 0; i < no; ++i) d.W(i, j) = rng.uniform(-lim, lim);
        d.b = Mat::Zero(no, 1);
        d.act = (l + 2 < dims.size()) ? hidden_act : out_act;
        net.layers.push_back(std::move(d));
    }
    return net;
}

static ad::Var activate(ad::Tape &t, ad::Var x, Act a) {
    switch (a) {
    case Act::kIdentity: return x;
    case Act::kTanh: return t.tanh(x);
    case Act::kRelu: return t.relu(x);
    case Act::kSoftplus: return t.softplus(x);
    }
    return x;
}

ad::Var Mlp::apply(ad::Tape &t, ad::Var x) {
    for (Dense &d : layers)
        x = activate(t, t.affine(t.param(d.W), x, t.param(d.b)), d.act);
    return x;
}

static Mat activate_eval(Mat x, Act a) {
    switch (a) {
    case Act::kIdentity: return x;
    case Act::kTanh: return x.array().tanh().matrix();
    case Act::kRelu: return x.cwiseMax(0.0);
    case Act::kSoftplus:
        return x.unaryExpr([](double v) {
            if (v > 30.0) return v;
            if (v < -30.0) return std::exp(v);
            return std::log1p(std::exp(v));
        });
    }
    return x;
}

Mat Mlp::eval(const Mat &x) const {
    Mat h = x;
    for (const Dense &d : layers) {
        Mat z(d.W.rows(), h.cols());
        z.noalias() = d.W * h;
        z.colwise() += Eigen::VectorXd(d.b.col(0));
        h = activate_eval(std::move(z), d.act);
    }
    return h;
}

void Mlp::collect(std::vector<Mat *> &out) {
    for (Dense &d : layers) {
        out.push_back(&d.W);
        out.push_back(&d.b);
    }
}

int Mlp::param_count() const {
    int n = 0;
    for (const Dense &d : layers) n += static_cast<int>(d.W.size() + d.b.size());
    return n;
}

void Optimizer::ascend(ad::Tape &t) {
    for (const auto &[storage, idx] : t.params()) {
        Mat g = t.grad_of(*storage);
        if (!adaptive) {
            *storage += learning_rate * g;
            continue;
        }
        Mat &m = ms_[storage];
        if (m.size() == 0) m = Mat::Zero(storage->rows(), storage->cols());
        m = decay * m + (1.0 - decay) * g.array().square().matrix();
        *storage += (learning_rate * g.array() / (m.array().sqrt() + eps)).matrix();
    }
}

} // namespace mcei
