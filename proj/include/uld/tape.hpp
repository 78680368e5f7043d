#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "uld/tensor.hpp"

namespace uld {

// Eager reverse-mode tape over Tensor values. Every op computes its value
// immediately and registers a closure that pushes the node's gradient into
// its inputs. backward() runs the closures in reverse creation order, so
// gradients are accumulated in a fixed, reproducible order.
//
// Usage: build the graph, seed grad(output) entries, call backward(), read
// grad(leaf). Gradients are zero-initialized at node creation.
class Tape {
public:
    int leaf(Tensor t);

    // --- feature-map ops ({C,H,W} tensors) ---

    // 3x3 or 1x1 convolution, stride 1, zero 'same' padding scaled by the
    // dilation rate. w: {Cout,Cin,k,k}, b: {Cout}.
    int conv2d(int x, int w, int b, int dilation = 1);
    int relu(int x);
    int avgpool2x2(int x);  // requires even spatial size
    // Mean over bins [floor(i*H/oh), ceil((i+1)*H/oh)); replicates pixels
    // when the target is larger than the input.
    int adaptive_avgpool(int x, int out_h, int out_w);
    // Factor-2 bilinear upsampling, half-pixel centers, edges replicated.
    int upsample_bilinear2x(int x);
    int concat_channels(const std::vector<int>& xs);

    // --- token/matrix ops ---

    int tokens_from_chw(int x);  // {C,h,w} -> {h*w, C}
    int matmul(int a, int b);    // {m,k} x {k,n} -> {m,n}
    int matmul_nt(int a, int b); // {m,k} x {n,k}^T -> {m,n}
    int scale(int x, double s);
    int softmax_rows(int x);
    int mean_rows(int x);        // {T,D} -> {D}
    int concat_vec(const std::vector<int>& xs);
    int linear(int x, int w, int b);  // x:{in}, w:{out,in}, b:{out} -> {out}

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    Tensor& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    void backward();

    // Concatenated relu activation masks in forward order. Two forward
    // passes with identical signatures evaluated the same linear region,
    // which is what central differences require around a kink.
    const std::vector<std::uint8_t>& relu_signature() const { return relu_masks_; }

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    int push(Tensor val, std::function<void(Tape&)> back);

    std::vector<Node> nodes_;
    std::vector<std::uint8_t> relu_masks_;
};

}  // namespace uld
