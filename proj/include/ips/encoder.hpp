#pragma once

#include <string>

#include <torch/torch.h>

namespace ips {

/// Residual CNN patch encoder. "resnet18" is the standard 18-layer network
/// (stage widths 64-512, embedding 512); "resnet18-slim" keeps the topology at
/// a quarter of the width (embedding 128) for CPU-scale runs.
struct EncoderSpec {
    std::string arch = "resnet18";
    int in_channels = 3;

    int base_width() const;
    int embedding_dim() const { return base_width() * 8; }
};

class BasicBlockImpl : public torch::nn::Module {
public:
    BasicBlockImpl(int in_planes, int planes, int stride);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class PatchEncoderImpl : public torch::nn::Module {
public:
    explicit PatchEncoderImpl(EncoderSpec spec = {});

    /// x: [B, C, P, P] with C == 1 (replicated) or in_channels. Returns [B, D].
    torch::Tensor forward(torch::Tensor x);

    const EncoderSpec& spec() const { return spec_; }
    int embedding_dim() const { return spec_.embedding_dim(); }

private:
    torch::nn::Sequential make_stage(int in_planes, int planes, int blocks, int stride);

    EncoderSpec spec_;
    torch::nn::Conv2d conv1{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr};
    torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr}, layer4{nullptr};
};
TORCH_MODULE(PatchEncoder);

} // namespace ips
