#include "model.hpp"

#include <sstream>

#include "common.hpp"

namespace xreid {

using namespace ad;
using nn::Init;

ReIDModel::ReIDModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg_.n_classes < 2) fail(Errc::invalid_argument, "model: n_classes must be > 1");
    Rng rng(cfg_.seed ^ fnv1a64("model-init"));

    auto conv = [&](const std::string& name, long cin, long cout, int k, int s, int p) {
        convs_.emplace_back(reg_, name, "backbone", cin, cout, k, s, p, /*bias=*/false, Init::he,
                            rng);
        return static_cast<int>(convs_.size() - 1);
    };
    auto bn = [&](const std::string& name, long c) {
        bns_.emplace_back(reg_, name, "backbone", c);
        return static_cast<int>(bns_.size() - 1);
    };

    if (cfg_.backbone == "desk") {
        // 4 conv blocks, global average pooling to 64 dims
        conv("backbone.conv1", 3, 16, 3, 2, 1);
        bn("backbone.bn1", 16);
        conv("backbone.conv2", 16, 32, 3, 2, 1);
        bn("backbone.bn2", 32);
        conv("backbone.conv3", 32, 64, 3, 2, 1);
        bn("backbone.bn3", 64);
        conv("backbone.conv4", 64, 64, 3, 1, 1);
        bn("backbone.bn4", 64);
        d_pool_ = 64;
    } else if (cfg_.backbone == "resnet50") {
        // standard bottleneck stack [3,4,6,3]; random init (no pretrained
        // weights are shipped; reference mode is structural)
        conv("backbone.conv1", 3, 64, 7, 2, 3);
        bn("backbone.bn1", 64);
        stage_sizes_ = {3, 4, 6, 3};
        const long widths[4] = {64, 128, 256, 512};
        long cin = 64;
        for (int stage = 0; stage < 4; ++stage) {
            const long mid = widths[stage];
            const long out = mid * 4;
            for (int b = 0; b < stage_sizes_[stage]; ++b) {
                const int stride = (stage > 0 && b == 0) ? 2 : 1;
                const std::string base =
                    "backbone.layer" + std::to_string(stage + 1) + "." + std::to_string(b);
                BottleneckRef ref;
                ref.c1 = conv(base + ".conv1", cin, mid, 1, 1, 0);
                bn(base + ".bn1", mid);
                ref.c2 = conv(base + ".conv2", mid, mid, 3, stride, 1);
                bn(base + ".bn2", mid);
                ref.c3 = conv(base + ".conv3", mid, out, 1, 1, 0);
                bn(base + ".bn3", out);
                if (b == 0) {
                    ref.down = conv(base + ".down", cin, out, 1, stride, 0);
                    bn(base + ".down_bn", out);
                }
                blocks_.push_back(ref);
                cin = out;
            }
        }
        d_pool_ = 2048;
    } else {
        fail(Errc::invalid_argument, "model: unknown backbone '" + cfg_.backbone + "'");
    }

    emb1024_fc_ = nn::Linear(reg_, "emb1024.fc", "new", d_pool_, 1024, true, Init::he, rng);
    emb1024_bn_ = nn::BatchNorm1d(reg_, "emb1024.bn", "new", 1024);
    classifier_ = nn::Linear(reg_, "classifier.fc", "new", 1024, cfg_.n_classes, true,
                             Init::classifier, rng);
    emb128_fc_ = nn::Linear(reg_, "emb128.fc", "new", 1024, 128, true, Init::he, rng);
}

Var ReIDModel::backbone_forward(const Var& x, bool training) {
    if (cfg_.backbone == "desk") {
        Var h = x;
        for (int i = 0; i < 4; ++i)
            h = softplus(bns_[i].forward(convs_[i].forward(h), training));
        return mean_per_nc(h);
    }
    // resnet50
    Var h = relu(bns_[0].forward(convs_[0].forward(x), training));
    h = maxpool2d(h, 3, 2, 1);
    size_t bn_idx = 1;
    for (const BottleneckRef& ref : blocks_) {
        Var identity = h;
        Var y = relu(bns_[bn_idx++].forward(convs_[ref.c1].forward(h), training));
        y = relu(bns_[bn_idx++].forward(convs_[ref.c2].forward(y), training));
        y = bns_[bn_idx++].forward(convs_[ref.c3].forward(y), training);
        if (ref.down >= 0)
            identity = bns_[bn_idx++].forward(convs_[ref.down].forward(h), training);
        h = relu(add(y, identity));
    }
    return mean_per_nc(h);
}

ForwardOutput ReIDModel::forward(const Var& images, bool training) {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.image_h || s[3] != cfg_.image_w)
        fail(Errc::invalid_argument,
             "model: expected (N,3," + std::to_string(cfg_.image_h) + "," +
                 std::to_string(cfg_.image_w) + ") batch, got " + shape_str(s));
    ForwardOutput out;
    out.pool_feat = backbone_forward(images, training);
    out.emb1024 = softplus(emb1024_bn_.forward(emb1024_fc_.forward(out.pool_feat), training));
    out.logits = classifier_.forward(out.emb1024);
    out.emb128 = emb128_fc_.forward(out.emb1024);
    return out;
}

Tensor ReIDModel::extract_descriptors(const DomainDataset& ds, PixelCache& cache,
                                      long batch_size) {
    const long n = ds.n_images();
    Tensor out({n, d_pool_});
    ad::NoGradGuard ng;
    for (long start = 0; start < n; start += batch_size) {
        const long b = std::min(batch_size, n - start);
        std::vector<Tensor> imgs;
        imgs.reserve(b);
        for (long i = 0; i < b; ++i) imgs.push_back(cache.get(ds.records[start + i]));
        ForwardOutput fo = forward(Var::constant(stack_images(imgs)), /*training=*/false);
        const Tensor& feat = fo.pool_feat.value();
        for (long i = 0; i < b; ++i)
            for (long j = 0; j < d_pool_; ++j) out.at2(start + i, j) = feat.at2(i, j);
    }
    return out;
}

Tensor stack_images(const std::vector<Tensor>& imgs) {
    if (imgs.empty()) fail(Errc::invalid_argument, "stack_images: empty batch");
    const auto& s0 = imgs[0].shape();
    if (s0.size() != 3) fail(Errc::invalid_argument, "stack_images: (3,H,W) images required");
    Tensor out({static_cast<long>(imgs.size()), s0[0], s0[1], s0[2]});
    const long per = s0[0] * s0[1] * s0[2];
    for (size_t i = 0; i < imgs.size(); ++i) {
        if (!imgs[i].same_shape(imgs[0]))
            fail(Errc::invalid_argument, "stack_images: mixed image shapes");
        for (long j = 0; j < per; ++j) out.data()[i * per + j] = imgs[i].data()[j];
    }
    return out;
}

void save_model_checkpoint(const ReIDModel& model, const std::string& path,
                           const std::string& config_hash, long epoch) {
    nn::save_registry_blob(model.registry(), path);
    std::ostringstream meta;
    meta << "backbone = " << model.config().backbone << "\n";
    meta << "d_pool = " << model.d_pool() << "\n";
    meta << "n_classes = " << model.config().n_classes << "\n";
    meta << "config_hash = " << config_hash << "\n";
    meta << "epoch = " << epoch << "\n";
    write_text_file_atomic(path + ".meta", meta.str());
}

long load_model_checkpoint(ReIDModel& model, const std::string& path,
                           const std::string& expect_hash) {
    const std::string meta = read_text_file(path + ".meta");
    std::istringstream in(meta);
    std::string line;
    std::string backbone, hash;
    long d_pool = -1, n_classes = -1, epoch = -1;
    while (std::getline(in, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "backbone") backbone = val;
        else if (key == "d_pool") d_pool = std::stol(val);
        else if (key == "n_classes") n_classes = std::stol(val);
        else if (key == "config_hash") hash = val;
        else if (key == "epoch") epoch = std::stol(val);
    }
    if (backbone != model.config().backbone)
        fail(Errc::invalid_argument, "checkpoint: backbone mismatch (" + backbone + ")");
    if (d_pool != model.d_pool()) fail(Errc::invalid_argument, "checkpoint: d_pool mismatch");
    if (n_classes != model.config().n_classes)
        fail(Errc::invalid_argument, "checkpoint: class count mismatch");
    if (!expect_hash.empty() && hash != expect_hash)
        fail(Errc::invalid_argument, "checkpoint: config hash mismatch");
    if (epoch < 0) fail(Errc::io, "checkpoint: missing epoch");
    nn::load_registry_blob(model.registry(), path);
    return epoch;
}

}  // namespace xreid
