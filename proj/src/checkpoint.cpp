#include "ocgraf/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace ocgraf::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void append_entry(json& entries, std::vector<float>& blob, const std::string& name,
                  const ad::Tensor& t) {
    entries.push_back({{"name", name},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"dtype", "float32"},
                       {"offset", blob.size()}});
    for (double v : t.data) blob.push_back(static_cast<float>(v));
}

void read_entry(const json& entry, const std::vector<float>& blob, ad::Tensor& out,
                const std::string& name) {
    const int rows = entry.at("rows"), cols = entry.at("cols");
    const size_t offset = entry.at("offset");
    if (rows != out.rows || cols != out.cols)
        throw Error("checkpoint: shape mismatch for entry " + name);
    if (offset + out.size() > blob.size())
        throw Error("checkpoint: blob overrun at entry " + name);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = blob[offset + i];
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ad::ParamStore& params, int64_t step,
                     const std::string& config_digest) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["step"] = step;
    manifest["config_digest"] = config_digest;
    manifest["adam_t"] = params.adam_t();

    json entries = json::array();
    std::vector<float> blob;
    for (const ad::Parameter* p : params.all()) {
        append_entry(entries, blob, p->name, p->value);
        append_entry(entries, blob, "opt:m:" + p->name, p->adam_m);
        append_entry(entries, blob, "opt:v:" + p->name, p->adam_v);
    }
    manifest["entries"] = entries;

    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw Error("checkpoint: cannot write " + (dir / "params.bin").string());
    bin.write(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(float));
    if (!bin) throw Error("checkpoint: blob write failed");
    bin.close();

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw Error("checkpoint: cannot write manifest");
    mf << manifest.dump(2) << "\n";
}

CheckpointInfo load_checkpoint(const fs::path& dir, ad::ParamStore& params,
                               const std::string& expected_digest) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw Error("checkpoint: cannot open " + (dir / "manifest.json").string());
    json manifest = json::parse(mf);
    if (manifest.at("format_version").get<int>() != 1)
        throw Error("checkpoint: unsupported format_version");

    CheckpointInfo info;
    info.step = manifest.at("step");
    info.config_digest = manifest.at("config_digest");
    if (!expected_digest.empty() && info.config_digest != expected_digest)
        throw Error("checkpoint: config digest mismatch (checkpoint " + info.config_digest +
                    ", current " + expected_digest + "); refusing to resume");

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw Error("checkpoint: cannot open params.bin");
    bin.seekg(0, std::ios::end);
    const size_t bytes = static_cast<size_t>(bin.tellg());
    bin.seekg(0);
    std::vector<float> blob(bytes / sizeof(float));
    bin.read(reinterpret_cast<char*>(blob.data()), blob.size() * sizeof(float));
    if (static_cast<size_t>(bin.gcount()) != blob.size() * sizeof(float))
        throw Error("checkpoint: short blob read");

    size_t applied = 0;
    for (const auto& entry : manifest.at("entries")) {
        const std::string name = entry.at("name");
        std::string base = name;
        ad::Tensor* target = nullptr;
        if (name.rfind("opt:m:", 0) == 0) {
            base = name.substr(6);
            ad::Parameter* p = params.find(base);
            if (!p) throw Error("checkpoint: unknown entry " + name);
            target = &p->adam_m;
        } else if (name.rfind("opt:v:", 0) == 0) {
            base = name.substr(6);
            ad::Parameter* p = params.find(base);
            if (!p) throw Error("checkpoint: unknown entry " + name);
            target = &p->adam_v;
        } else {
            ad::Parameter* p = params.find(base);
            if (!p) throw Error("checkpoint: unknown entry " + name);
            target = &p->value;
        }
        read_entry(entry, blob, *target, name);
        ++applied;
    }
    if (applied != 3 * params.count())
        throw Error("checkpoint: entry count mismatch (expected " +
                    std::to_string(3 * params.count()) + ", found " + std::to_string(applied) +
                    ")");
    params.set_adam_t(manifest.at("adam_t"));
    return info;
}

std::optional<fs::path> latest_checkpoint(const fs::path& out_dir) {
    std::optional<fs::path> best;
    int64_t best_step = -1;
    if (!fs::exists(out_dir)) return best;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_", 0) != 0) continue;
        if (!fs::exists(entry.path() / "manifest.json")) continue;
        const int64_t step = std::atoll(name.c_str() + 5);
        if (step > best_step) {
            best_step = step;
            best = entry.path();
        }
    }
    return best;
}

}  // namespace ocgraf::io
