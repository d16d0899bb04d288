#pragma once
#include "mcei/rng.hpp"
#include "mcei/tape.hpp"

#include <string>
#include <vector>

namespace mcei {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Act { kIdentity, kTanh, kRelu, kSoftplus };

std::string act_name(Act a);
Act act_from_name(const std::string &s);

struct Dense {
    Mat W; // out x in
    Mat b; // out x 1
    Act act = Act::kIdentity;
};

// Fully connected network; batches are columns.
struct Mlp {
    std::vector<Dense> layers;

    static Mlp make(int in, const std::vector<int> &hidden, int out, Act hidden_act,
                    Act out_act, RngStream &rng);

    int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
    int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }

    // Non-const: registers the layer matrices on the tape so an optimizer
    // can write updates back through the recorded pointers.
    ad::Var apply(ad::Tape &t, ad::Var x);
    Mat eval(const Mat &x) const;

    void collect(std::vector<Mat *> &out);
    int param_count() const;
};

// Gradient-ascent update over every parameter registered on the tape.
// With adaptive=true, per-coordinate RMS scaling of the step.
struct Optimizer {
    double learning_rate = 0.01;
    bool adaptive = false;
    double decay = 0.9;
    double eps = 1e-8;

    void ascend(ad::Tape &t);

  private:
    std::unordered_map<const Mat *, Mat> ms_;
};

} // namespace mcei
