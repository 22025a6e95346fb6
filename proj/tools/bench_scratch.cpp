#include <chrono>
#include <iostream>

#include "omniclip/train.hpp"

using namespace omniclip;

int main(int argc, char** argv) {
    ModelConfig cfg = desk_config();
    bool pta = argc < 2 || std::string(argv[1]) != "nopta";
    cfg.pta_enabled = pta;
    int epochs = argc > 2 ? std::atoi(argv[2]) : 40;
    double lr = argc > 3 ? std::atof(argv[3]) : 1e-2;
    double wd = argc > 4 ? std::atof(argv[4]) : 0.003;
    DatasetManifest man = make_dataset(LabelMap::MotionOnly, 64, 8, 16, 42);
    OmniClipModel model(cfg, man.classes);
    TrainConfig tcfg;
    tcfg.epochs = epochs;
    tcfg.warmup_epochs = 5;
    tcfg.batch_size = 16;
    tcfg.peak_lr = lr;
    tcfg.weight_decay = wd;
    Trainer trainer(model, man, tcfg);
    auto log = trainer.run();
    for (const auto& row : log)
        if (row.val_top1 && (*row.epoch % 4 == 3 || *row.epoch + 1 == (size_t)epochs))
            std::cout << "epoch " << *row.epoch << " loss=" << row.loss << " val=" << *row.val_top1 << "\n";
    if (pta) {
        std::cout << "alphas:";
        for (const auto& blk : model.video.blocks)
            if (blk.has_adapter) std::cout << " " << blk.gate.alpha.value()[0];
        std::cout << "\n";
    }
    auto ev = evaluate(model, man, Protocol::Supervised);
    DatasetManifest train_as_test = man;
    train_as_test.test = man.train;
    auto tr = evaluate(model, train_as_test, Protocol::Supervised);
    std::cout << "train top1: " << tr.top1 << "  test top1: " << ev.top1 << "\n";
    return 0;
}
