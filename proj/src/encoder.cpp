#include "ips/encoder.hpp"

#include <stdexcept>

namespace ips {

namespace nn = torch::nn;

int EncoderSpec::base_width() const {
    if (arch == "resnet18") return 64;
    if (arch == "resnet18-slim") return 16;
    throw std::invalid_argument("unknown encoder architecture '" + arch + "'");
}

BasicBlockImpl::BasicBlockImpl(int in_planes, int planes, int stride) {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_planes, planes, 3).stride(stride).padding(1).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(planes, planes, 3).stride(1).padding(1).bias(false)));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    if (stride != 1 || in_planes != planes) {
        downsample = register_module(
            "downsample",
            nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_planes, planes, 1).stride(stride).bias(false)),
                           nn::BatchNorm2d(planes)));
    }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = bn2(conv2(out));
    out += downsample ? downsample->forward(x) : x;
    return torch::relu(out);
}

PatchEncoderImpl::PatchEncoderImpl(EncoderSpec spec) : spec_(std::move(spec)) {
    const int w = spec_.base_width();
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(spec_.in_channels, w, 7).stride(2).padding(3).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(w));
    layer1 = register_module("layer1", make_stage(w, w, 2, 1));
    layer2 = register_module("layer2", make_stage(w, 2 * w, 2, 2));
    layer3 = register_module("layer3", make_stage(2 * w, 4 * w, 2, 2));
    layer4 = register_module("layer4", make_stage(4 * w, 8 * w, 2, 2));

    for (auto& m : modules(/*include_self=*/false)) {
        if (auto* conv = m->as<nn::Conv2d>()) {
            nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
        } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            nn::init::ones_(bn->weight);
            nn::init::zeros_(bn->bias);
        }
    }
}

nn::Sequential PatchEncoderImpl::make_stage(int in_planes, int planes, int blocks, int stride) {
    nn::Sequential stage;
    stage->push_back(BasicBlock(in_planes, planes, stride));
    for (int i = 1; i < blocks; ++i) {
        stage->push_back(BasicBlock(planes, planes, 1));
    }
    return stage;
}

torch::Tensor PatchEncoderImpl::forward(torch::Tensor x) {
    if (x.dim() != 4) {
        throw std::invalid_argument("encoder: expected [B, C, P, P] input");
    }
    if (x.size(1) == 1 && spec_.in_channels != 1) {
        x = x.expand({x.size(0), spec_.in_channels, x.size(2), x.size(3)});
    } else if (x.size(1) != spec_.in_channels) {
        throw std::invalid_argument("encoder: expected " + std::to_string(spec_.in_channels) + " channels, got " +
                                    std::to_string(x.size(1)));
    }
    x = torch::relu(bn1(conv1(x)));
    x = torch::max_pool2d(x, 3, 2, 1);
    x = layer4->forward(layer3->forward(layer2->forward(layer1->forward(x))));
    return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
}

} // namespace ips
