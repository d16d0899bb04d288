#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcei::ad {

using Mat = Eigen::MatrixXd;

// Raised when a forward value or an adjoint goes non-finite; carries the
// tape index of the offending node so callers can name the term.
struct TapeError : std::runtime_error {
    int node;
    TapeError(int node_idx, const std::string &what)
        : std::runtime_error(what), node(node_idx) {}
};

struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

enum class Op : std::uint8_t {
    kLeaf,
    kParam,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kMatMul,
    kScale, // c * a
    kShift, // a + c
    kTanh,
    kRelu,
    kSoftplus,
    kExp,
    kLog,
    kSquare,
    kAbs,
    kSum,    // 1x1
    kColSum, // 1xc, sums the rows of each column
    kVCat,
};

// Reverse-mode tape over matrix-valued nodes. Forward values are computed
// eagerly as ops are recorded; a batch lives in the columns, so one node per
// layer is enough and the work stays inside Eigen kernels. Elementwise
// binary ops broadcast a (r x 1) or (1 x 1) operand over columns.
class Tape {
  public:
    Var leaf(Mat v, const char *label = "leaf");
    Var leaf(double v);
    // Registers a trainable parameter; repeated calls with the same storage
    // address on one tape return the same node, so shared parameters
    // accumulate adjoints correctly.
    Var param(Mat &storage);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var matmul(Var a, Var b);
    Var scale(Var a, double c);
    Var shift(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }
    Var tanh(Var a);
    Var relu(Var a);
    Var softplus(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var square(Var a);
    Var abs(Var a);
    Var sum(Var a);
    Var colsum(Var a);
    Var vcat(Var a, Var b);
    Var mean(Var a);
    // W*x + b with b broadcast over columns.
    Var affine(Var W, Var x, Var b) { return add(matmul(W, x), b); }

    const Mat& val(Var v) const;
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds the (required 1x1) output with 1 and sweeps the tape in reverse.
    void backward(Var out);

    const Mat& grad(Var v) const;
    // Adjoint of a registered parameter; zeros if it never entered the graph.
    Mat grad_of(const Mat &storage) const;
    const std::vector<std::pair<Mat *, int>>& params() const { return params_; }

    void reset();

  private:
    struct Node {
        Op op;
        int a;
        int b;
        double c;
        Mat val;
        Mat adj;
    };

    int push(Op op, int a, int b, double c, Mat val);
    void accum(int idx, const Mat &g);
    void check(Var v) const;

    std::vector<Node> nodes_;
    std::vector<std::pair<Mat *, int>> params_;
    std::unordered_map<const Mat *, int> param_lookup_;
    bool swept_ = false;
};

// Central finite differences of a scalar function, step h per coordinate.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd &)> &f,
                                 const Eigen::VectorXd &x, double h = 1e-5);

// Flat view over a set of parameter matrices, for finite-difference checks
// and optimizer-free parameter shuttling.
struct ParamPack {
    std::vector<Mat *> mats;

    int dim() const;
    Eigen::VectorXd pack() const;
    void unpack(const Eigen::VectorXd &flat);
};

} // namespace mcei::ad
