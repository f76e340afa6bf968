#pragma once

#include <variant>
#include <vector>

#include "ssr/ops.hpp"
#include "ssr/tensor.hpp"

namespace ssr {

// Records every executed op so a single reverse sweep can fill in d(loss)/dp
// for all registered parameter leaves. One tape is one single-threaded unit
// of work; it is built, run backward once, then discarded.
template <class S>
class Tape {
public:
    using NodeId = int;

    // External parameter tensor. Its grad buffer is written by backward()
    // when requires_grad is set. The tensor must outlive the tape.
    NodeId leaf(Tensor<S>& t) {
        nodes_.push_back(Node{Tensor<S>(), &t, t.requires_grad()});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    // Tape-owned input with no gradient (images, targets).
    NodeId constant(Tensor<S> t) {
        nodes_.push_back(Node{std::move(t), nullptr, false});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor<S>& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].val(); }

    S scalar_value(NodeId id) const {
        const Tensor<S>& v = value(id);
        check(v.size() == 1, "scalar_value: node is not a scalar");
        return v[0];
    }

    NodeId conv2d(NodeId x, NodeId w, NodeId b, int padding) {
        Tensor<S> y = conv2d_forward(value(x), value(w), value(b), padding);
        return emit(ConvRec{x, w, b, padding}, std::move(y), needs(x) || needs(w) || needs(b));
    }

    NodeId maxpool2(NodeId x) {
        MaxPoolRec rec{x, {}};
        Tensor<S> y = maxpool2_forward(value(x), &rec.argmax);
        return emit(std::move(rec), std::move(y), needs(x));
    }

    NodeId pixel_shuffle(NodeId x, int r = 2) {
        Tensor<S> y = ssr::pixel_shuffle(value(x), r);
        return emit(ShuffleRec{x, r}, std::move(y), needs(x));
    }

    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, BatchNormState<S>& state, Mode mode,
                     S eps, S momentum) {
        BatchNormRec rec{x, gamma, beta, mode, {}};
        Tensor<S> y = batchnorm_forward(value(x), value(gamma), value(beta), state, mode, eps,
                                        momentum, &rec.saved);
        return emit(std::move(rec), std::move(y), needs(x) || needs(gamma) || needs(beta));
    }

    NodeId leaky_relu(NodeId x, S slope) {
        Tensor<S> y = leaky_relu_forward(value(x), slope);
        return emit(LeakyRec{x, slope}, std::move(y), needs(x));
    }

    NodeId dropout2d(NodeId x, S rate, Mode mode, Rng& rng) {
        DropoutRec rec{x, {}};
        Tensor<S> y = dropout2d_forward(value(x), rate, mode, rng, &rec.mask);
        return emit(std::move(rec), std::move(y), needs(x));
    }

    // Same op with a caller-fixed mask; keeps stochastic layers reproducible.
    NodeId dropout2d_fixed(NodeId x, std::vector<S> mask) {
        Tensor<S> y = dropout2d_apply(value(x), mask);
        return emit(DropoutRec{x, std::move(mask)}, std::move(y), needs(x));
    }

    NodeId concat_channels(NodeId a, NodeId b) {
        Tensor<S> y = ssr::concat_channels(value(a), value(b));
        return emit(ConcatRec{a, b}, std::move(y), needs(a) || needs(b));
    }

    NodeId mse_loss(NodeId pred, NodeId target) {
        Tensor<S> y = mse_loss_forward(value(pred), value(target));
        return emit(MseRec{pred, target}, std::move(y), needs(pred) || needs(target));
    }

    // Reverse sweep from a scalar loss node. Parameter leaves receive their
    // gradients (overwriting previous contents); intermediate gradient
    // buffers are released before returning.
    void backward(NodeId loss) {
        if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
        consumed_ = true;
        check(value(loss).size() == 1, "Tape::backward: loss must be a scalar");

        grads_.assign(nodes_.size(), {});
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].needs_grad)
                grads_[i].assign(static_cast<size_t>(nodes_[i].val().size()), S(0));
        }
        if (!nodes_[static_cast<size_t>(loss)].needs_grad)
            grads_[static_cast<size_t>(loss)].assign(1, S(0));
        grads_[static_cast<size_t>(loss)][0] = S(1);

        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            const std::vector<S>& gy = grads_[static_cast<size_t>(it->out)];
            if (gy.empty()) continue;
            std::visit([&](const auto& rec) { this->propagate(rec, gy); }, it->op);
        }

        for (size_t i = 0; i < nodes_.size(); ++i) {
            Node& node = nodes_[i];
            if (node.ext && node.ext->requires_grad()) node.ext->grad() = std::move(grads_[i]);
        }
        grads_.clear();
    }

private:
    struct ConvRec {
        NodeId x, w, b;
        int padding;
    };
    struct MaxPoolRec {
        NodeId x;
        std::vector<int64_t> argmax;
    };
    struct ShuffleRec {
        NodeId x;
        int r;
    };
    struct BatchNormRec {
        NodeId x, gamma, beta;
        Mode mode;
        BatchNormSaved<S> saved;
    };
    struct LeakyRec {
        NodeId x;
        S slope;
    };
    struct DropoutRec {
        NodeId x;
        std::vector<S> mask;  // empty means eval-mode identity
    };
    struct ConcatRec {
        NodeId a, b;
    };
    struct MseRec {
        NodeId pred, target;
    };
    using Op = std::variant<ConvRec, MaxPoolRec, ShuffleRec, BatchNormRec, LeakyRec, DropoutRec,
                            ConcatRec, MseRec>;

    struct Node {
        Tensor<S> owned;
        Tensor<S>* ext = nullptr;
        bool needs_grad = false;
        const Tensor<S>& val() const { return ext ? *ext : owned; }
    };

    struct Record {
        Op op;
        NodeId out;
    };

    bool needs(NodeId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    std::vector<S>* grad_of(NodeId id) {
        return needs(id) ? &grads_[static_cast<size_t>(id)] : nullptr;
    }

    template <class R>
    NodeId emit(R&& rec, Tensor<S>&& y, bool out_needs) {
        nodes_.push_back(Node{std::move(y), nullptr, out_needs});
        const NodeId out = static_cast<NodeId>(nodes_.size() - 1);
        records_.push_back(Record{Op(std::forward<R>(rec)), out});
        return out;
    }

    void propagate(const ConvRec& r, const std::vector<S>& gy) {
        conv2d_backward(value(r.x), value(r.w), r.padding, gy, grad_of(r.x), grad_of(r.w),
                        grad_of(r.b));
    }
    void propagate(const MaxPoolRec& r, const std::vector<S>& gy) {
        maxpool2_backward(r.argmax, gy, grad_of(r.x));
    }
    void propagate(const ShuffleRec& r, const std::vector<S>& gy) {
        std::vector<S>* gx = grad_of(r.x);
        if (!gx) return;
        const Tensor<S>& xv = value(r.x);
        Tensor<S> gyt(std::vector<int>{xv.dim(0), xv.dim(1) / (r.r * r.r), xv.dim(2) * r.r,
                                       xv.dim(3) * r.r},
                      gy);
        Tensor<S> gxt = pixel_unshuffle(gyt, r.r);
        for (int64_t i = 0; i < gxt.size(); ++i) (*gx)[static_cast<size_t>(i)] += gxt[i];
    }
    void propagate(const BatchNormRec& r, const std::vector<S>& gy) {
        batchnorm_backward(value(r.x), value(r.gamma), r.saved, r.mode, gy, grad_of(r.x),
                           grad_of(r.gamma), grad_of(r.beta));
    }
    void propagate(const LeakyRec& r, const std::vector<S>& gy) {
        leaky_relu_backward(value(r.x), r.slope, gy, grad_of(r.x));
    }
    void propagate(const DropoutRec& r, const std::vector<S>& gy) {
        dropout2d_backward(value(r.x).shape(), r.mask, gy, grad_of(r.x));
    }
    void propagate(const ConcatRec& r, const std::vector<S>& gy) {
        const Tensor<S>& av = value(r.a);
        const Tensor<S>& bv = value(r.b);
        concat_channels_backward(av.dim(0), av.dim(1), bv.dim(1), av.dim(2), av.dim(3), gy,
                                 grad_of(r.a), grad_of(r.b));
    }
    void propagate(const MseRec& r, const std::vector<S>& gy) {
        mse_loss_backward(value(r.pred), value(r.target), gy, grad_of(r.pred),
                          grad_of(r.target));
    }

    std::vector<Node> nodes_;
    std::vector<Record> records_;
    std::vector<std::vector<S>> grads_;
    bool consumed_ = false;
};

}  // namespace ssr
