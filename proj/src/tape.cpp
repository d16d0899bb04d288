#include "mcei/tape.hpp"

#include <cmath>

namespace mcei::ad {

namespace {

double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

bool shapes_compatible(const Mat &a, const Mat &b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return true;
    if (a.rows() == b.rows() && (a.cols() == 1 || b.cols() == 1)) return true;
    if (a.size() == 1 || b.size() == 1) return true;
    return false;
}

// Materializes operand m at the broadcast shape (rows, cols).
Mat bcast(const Mat &m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    if (m.size() == 1) return Mat::Constant(rows, cols, m(0, 0));
    return m.replicate(1, cols / m.cols());
}

} // namespace

int Tape::push(Op op, int a, int b, double c, Mat val) {
    if (!val.allFinite())
        throw TapeError(static_cast<int>(nodes_.size()),
                        "non-finite value at tape node " + std::to_string(nodes_.size()) +
                            " (op " + std::to_string(static_cast<int>(op)) + ")");
    nodes_.push_back(Node{op, a, b, c, std::move(val), Mat()});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
    if (!v.valid() || v.i >= size()) throw std::invalid_argument("Var does not belong to this tape");
}

Var Tape::leaf(Mat v, const char *) { return Var{push(Op::kLeaf, -1, -1, 0.0, std::move(v))}; }

Var Tape::leaf(double v) { return Var{push(Op::kLeaf, -1, -1, 0.0, Mat::Constant(1, 1, v))}; }

Var Tape::param(Mat &storage) {
    auto it = param_lookup_.find(&storage);
    if (it != param_lookup_.end()) return Var{it->second};
    int idx = push(Op::kParam, -1, -1, 0.0, storage);
    param_lookup_.emplace(&storage, idx);
    params_.emplace_back(&storage, idx);
    return Var{idx};
}

static void require_broadcast(const Mat &a, const Mat &b, const char *op) {
    if (!shapes_compatible(a, b))
        throw std::invalid_argument(std::string(op) + ": incompatible shapes (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

Var Tape::add(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    require_broadcast(A, B, "add");
    Eigen::Index r = std::max(A.rows(), B.rows()), c = std::max(A.cols(), B.cols());
    return Var{push(Op::kAdd, a.i, b.i, 0.0, bcast(A, r, c) + bcast(B, r, c))};
}

Var Tape::sub(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    require_broadcast(A, B, "sub");
    Eigen::Index r = std::max(A.rows(), B.rows()), c = std::max(A.cols(), B.cols());
    return Var{push(Op::kSub, a.i, b.i, 0.0, bcast(A, r, c) - bcast(B, r, c))};
}

Var Tape::mul(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    require_broadcast(A, B, "mul");
    Eigen::Index r = std::max(A.rows(), B.rows()), c = std::max(A.cols(), B.cols());
    return Var{push(Op::kMul, a.i, b.i, 0.0,
                    (bcast(A, r, c).array() * bcast(B, r, c).array()).matrix())};
}

Var Tape::div(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    require_broadcast(A, B, "div");
    Eigen::Index r = std::max(A.rows(), B.rows()), c = std::max(A.cols(), B.cols());
    return Var{push(Op::kDiv, a.i, b.i, 0.0,
                    (bcast(A, r, c).array() / bcast(B, r, c).array()).matrix())};
}

Var Tape::matmul(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                    std::to_string(A.cols()) + " vs " + std::to_string(B.rows()) + ")");
    Mat v(A.rows(), B.cols());
    v.noalias() = A * B;
    return Var{push(Op::kMatMul, a.i, b.i, 0.0, std::move(v))};
}

Var Tape::scale(Var a, double c) {
    check(a);
    return Var{push(Op::kScale, a.i, -1, c, c * nodes_[a.i].val)};
}

Var Tape::shift(Var a, double c) {
    check(a);
    return Var{push(Op::kShift, a.i, -1, c, (nodes_[a.i].val.array() + c).matrix())};
}

Var Tape::tanh(Var a) {
    check(a);
    return Var{push(Op::kTanh, a.i, -1, 0.0, nodes_[a.i].val.array().tanh().matrix())};
}

Var Tape::relu(Var a) {
    check(a);
    return Var{push(Op::kRelu, a.i, -1, 0.0, nodes_[a.i].val.cwiseMax(0.0))};
}

Var Tape::softplus(Var a) {
    check(a);
    return Var{push(Op::kSoftplus, a.i, -1, 0.0,
                    nodes_[a.i].val.unaryExpr([](double x) { return softplus_scalar(x); }))};
}

Var Tape::exp(Var a) {
    check(a);
    return Var{push(Op::kExp, a.i, -1, 0.0, nodes_[a.i].val.array().exp().matrix())};
}

Var Tape::log(Var a) {
    check(a);
    return Var{push(Op::kLog, a.i, -1, 0.0, nodes_[a.i].val.array().log().matrix())};
}

Var Tape::square(Var a) {
    check(a);
    return Var{push(Op::kSquare, a.i, -1, 0.0, nodes_[a.i].val.array().square().matrix())};
}

Var Tape::abs(Var a) {
    check(a);
    return Var{push(Op::kAbs, a.i, -1, 0.0, nodes_[a.i].val.array().abs().matrix())};
}

Var Tape::sum(Var a) {
    check(a);
    return Var{push(Op::kSum, a.i, -1, 0.0, Mat::Constant(1, 1, nodes_[a.i].val.sum()))};
}

Var Tape::colsum(Var a) {
    check(a);
    return Var{push(Op::kColSum, a.i, -1, 0.0, nodes_[a.i].val.colwise().sum())};
}

Var Tape::vcat(Var a, Var b) {
    check(a); check(b);
    const Mat &A = nodes_[a.i].val, &B = nodes_[b.i].val;
    if (A.cols() != B.cols())
        throw std::invalid_argument("vcat: column counts disagree");
    Mat v(A.rows() + B.rows(), A.cols());
    v.topRows(A.rows()) = A;
    v.bottomRows(B.rows()) = B;
    return Var{push(Op::kVCat, a.i, b.i, 0.0, std::move(v))};
}

Var Tape::mean(Var a) {
    check(a);
    return scale(sum(a), 1.0 / static_cast<double>(nodes_[a.i].val.size()));
}

const Mat& Tape::val(Var v) const {
    check(v);
    return nodes_[v.i].val;
}

void Tape::accum(int idx, const Mat &g) {
    Node &n = nodes_[idx];
    const Eigen::Index r = n.val.rows(), c = n.val.cols();
    Mat contrib;
    if (g.rows() == r && g.cols() == c) {
        contrib = g;
    } else if (g.rows() == r && c == 1) {
        contrib = g.rowwise().sum();
    } else if (r == 1 && c == 1) {
        contrib = Mat::Constant(1, 1, g.sum());
    } else {
        throw std::logic_error("adjoint broadcast reduction shape mismatch");
    }
    if (n.adj.size() == 0)
        n.adj = std::move(contrib);
    else
        n.adj += contrib;
}

void Tape::backward(Var out) {
    check(out);
    const Mat &o = nodes_[out.i].val;
    if (o.rows() != 1 || o.cols() != 1)
        throw std::invalid_argument("backward: output must be 1x1, got " +
                                    std::to_string(o.rows()) + "x" + std::to_string(o.cols()));
    if (swept_) throw std::logic_error("backward already ran on this tape");
    swept_ = true;
    nodes_[out.i].adj = Mat::Constant(1, 1, 1.0);

    for (int i = out.i; i >= 0; --i) {
        Node &n = nodes_[i];
        if (n.adj.size() == 0) continue;
        if (!n.adj.allFinite())
            throw TapeError(i, "non-finite adjoint at tape node " + std::to_string(i));
        const Mat &g = n.adj;
        switch (n.op) {
        case Op::kLeaf:
        case Op::kParam:
            break;
        case Op::kAdd:
            accum(n.a, g);
            accum(n.b, g);
            break;
        case Op::kSub:
            accum(n.a, g);
            accum(n.b, -g);
            break;
        case Op::kMul: {
            const Mat &A = nodes_[n.a].val, &B = nodes_[n.b].val;
            accum(n.a, (g.array() * bcast(B, g.rows(), g.cols()).array()).matrix());
            accum(n.b, (g.array() * bcast(A, g.rows(), g.cols()).array()).matrix());
            break;
        }
        case Op::kDiv: {
            const Mat Ab = bcast(nodes_[n.a].val, g.rows(), g.cols());
            const Mat Bb = bcast(nodes_[n.b].val, g.rows(), g.cols());
            accum(n.a, (g.array() / Bb.array()).matrix());
            accum(n.b, (-g.array() * Ab.array() / Bb.array().square()).matrix());
            break;
        }
        case Op::kMatMul: {
            const Mat &A = nodes_[n.a].val, &B = nodes_[n.b].val;
            Mat ga(A.rows(), A.cols());
            ga.noalias() = g * B.transpose();
            Mat gb(B.rows(), B.cols());
            gb.noalias() = A.transpose() * g;
            accum(n.a, ga);
            accum(n.b, gb);
            break;
        }
        case Op::kScale:
            accum(n.a, n.c * g);
            break;
        case Op::kShift:
            accum(n.a, g);
            break;
        case Op::kTanh:
            accum(n.a, (g.array() * (1.0 - n.val.array().square())).matrix());
            break;
        case Op::kRelu:
            accum(n.a, (g.array() * (nodes_[n.a].val.array() > 0.0).cast<double>()).matrix());
            break;
        case Op::kSoftplus:
            accum(n.a, (g.array() *
                        nodes_[n.a].val.unaryExpr([](double x) { return sigmoid_scalar(x); }).array())
                           .matrix());
            break;
        case Op::kExp:
            accum(n.a, (g.array() * n.val.array()).matrix());
            break;
        case Op::kLog:
            accum(n.a, (g.array() / nodes_[n.a].val.array()).matrix());
            break;
        case Op::kSquare:
            accum(n.a, (2.0 * g.array() * nodes_[n.a].val.array()).matrix());
            break;
        case Op::kAbs:
            accum(n.a, (g.array() * nodes_[n.a].val.array().sign()).matrix());
            break;
        case Op::kSum:
            accum(n.a, Mat::Constant(nodes_[n.a].val.rows(), nodes_[n.a].val.cols(), g(0, 0)));
            break;
        case Op::kColSum:
            accum(n.a, g.replicate(nodes_[n.a].val.rows(), 1));
            break;
        case Op::kVCat: {
            const Eigen::Index ra = nodes_[n.a].val.rows();
            accum(n.a, g.topRows(ra));
            accum(n.b, g.bottomRows(g.rows() - ra));
            break;
        }
        }
    }
}

const Mat& Tape::grad(Var v) const {
    check(v);
    static const Mat kEmpty;
    if (nodes_[v.i].adj.size() == 0) return kEmpty;
    return nodes_[v.i].adj;
}

Mat Tape::grad_of(const Mat &storage) const {
    auto it = param_lookup_.find(&storage);
    if (it == param_lookup_.end() || nodes_[it->second].adj.size() == 0)
        return Mat::Zero(storage.rows(), storage.cols());
    return nodes_[it->second].adj;
}

void Tape::reset() {
    nodes_.clear();
    params_.clear();
    param_lookup_.clear();
    swept_ = false;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd &)> &f,
                                 const Eigen::VectorXd &x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd p = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        p(i) = x(i) + h;
        double up = f(p);
        p(i) = x(i) - h;
        double dn = f(p);
        p(i) = x(i);
        g(i) = (up - dn) / (2.0 * h);
    }
    return g;
}

int ParamPack::dim() const {
    int d = 0;
    for (const Mat *m : mats) d += static_cast<int>(m->size());
    return d;
}

Eigen::VectorXd ParamPack::pack() const {
    Eigen::VectorXd flat(dim());
    int off = 0;
    for (const Mat *m : mats) {
        flat.segment(off, m->size()) = Eigen::Map<const Eigen::VectorXd>(m->data(), m->size());
        off += static_cast<int>(m->size());
    }
    return flat;
}

void ParamPack::unpack(const Eigen::VectorXd &flat) {
    int off = 0;
    for (Mat *m : mats) {
        Eigen::Map<Eigen::VectorXd>(m->data(), m->size()) = flat.segment(off, m->size());
        off += static_cast<int>(m->size());
    }
}

} // namespace mcei::ad
