#include "evoact/dataset.hpp"

#include <json.hpp>

#include <fstream>

namespace evoact {

using nlohmann::json;

ObservationSet DemoDataset::observation(std::size_t tuple) const {
    ObservationSet obs;
    obs.height = image_size;
    obs.width = image_size;
    const auto& blob = obs_blobs[tuple];
    std::size_t plane = static_cast<std::size_t>(3) * image_size * image_size;
    for (int v = 0; v < views; ++v) {
        obs.views.emplace_back(blob.begin() + static_cast<std::ptrdiff_t>(v * plane),
                               blob.begin() + static_cast<std::ptrdiff_t>((v + 1) * plane));
    }
    return obs;
}

const Instruction& DemoDataset::instruction(std::size_t tuple) const {
    return episodes[static_cast<std::size_t>(tuples[tuple].episode)].instruction;
}

std::string sidecar_path_for(const std::string& jsonl_path) {
    std::string base = jsonl_path;
    auto pos = base.rfind(".jsonl");
    if (pos != std::string::npos && pos == base.size() - 6) base.resize(pos);
    return base + ".bin";
}

DemoGenResult generate_demos(Task task, int n, std::uint64_t seed, const std::string& out_jsonl, int horizon,
                             const EnvParams& params) {
    if (n < 1) throw config_error("generate_demos: episode count must be >= 1");
    if (horizon < 1) throw config_error("generate_demos: horizon must be >= 1");

    struct EpisodeData {
        std::uint64_t seed;
        Instruction instruction;
        std::vector<std::vector<float>> obs;     // per step, flattened views
        std::vector<std::vector<float>> states;  // per step
        std::vector<std::array<float, 3>> actions;
    };
    std::vector<EpisodeData> kept;
    int attempts = 0;
    int failures = 0;
    std::uint64_t next_seed = seed;
    while (static_cast<int>(kept.size()) < n) {
        ++attempts;
        std::uint64_t ep_seed = next_seed++;
        ToyEnv env(task, ep_seed, params);
        EpisodeData ep;
        ep.seed = ep_seed;
        ep.instruction = env.instruction();
        bool success = false;
        while (!env.state().done) {
            ObservationSet obs = env.observe();
            std::vector<float> flat;
            for (const auto& v : obs.views) flat.insert(flat.end(), v.begin(), v.end());
            ep.obs.push_back(std::move(flat));
            ep.states.push_back(env.robot_state().values);
            std::array<float, 3> a = expert_action(env.state(), params);
            ep.actions.push_back(a);
            success = env.step(a).success;
        }
        if (success) {
            kept.push_back(std::move(ep));
        } else {
            ++failures;
            if (attempts >= 20 && failures * 2 > attempts) {
                throw std::runtime_error("generate_demos: expert failure rate " + std::to_string(failures) + "/" +
                                         std::to_string(attempts) + " exceeds 50%, environment misconfigured");
            }
        }
    }

    DemoGenResult result;
    result.episodes = n;
    result.attempts = attempts;
    result.jsonl_path = out_jsonl;
    result.sidecar_path = sidecar_path_for(out_jsonl);

    std::ofstream sidecar(result.sidecar_path, std::ios::binary | std::ios::trunc);
    if (!sidecar) throw std::runtime_error("generate_demos: cannot write " + result.sidecar_path);
    std::ofstream out(out_jsonl, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("generate_demos: cannot write " + out_jsonl);

    json palette = json::array();
    for (int c = 0; c < kPaletteSize; ++c) palette.push_back({kPalette[c][0], kPalette[c][1], kPalette[c][2]});
    json header{{"type", "header"},
                {"format", "evoact-demos"},
                {"version", 1},
                {"task", to_string(task)},
                {"h", horizon},
                {"action_dim", 3},
                {"state_dim", 4},
                {"views", params.views},
                {"image_size", params.image_size},
                {"palette", palette},
                {"seed", seed},
                {"episodes", n}};
    out << header.dump() << "\n";

    std::int64_t offset = 0;
    int tuple_count = 0;
    for (std::size_t e = 0; e < kept.size(); ++e) {
        const EpisodeData& ep = kept[e];
        json erec{{"type", "episode"},
                  {"index", e},
                  {"seed", ep.seed},
                  {"length", ep.actions.size()},
                  {"success", true},
                  {"instruction", ep.instruction.tokens}};
        out << erec.dump() << "\n";

        int len = static_cast<int>(ep.actions.size());
        for (int t = 0; t < len; ++t) {
            // Window of H actions starting at t, end-padded by repetition.
            json actions = json::array();
            for (int k = 0; k < horizon; ++k) {
                const auto& a = ep.actions[static_cast<std::size_t>(std::min(t + k, len - 1))];
                actions.push_back({a[0], a[1], a[2]});
            }
            const auto& blob = ep.obs[static_cast<std::size_t>(t)];
            std::int64_t bytes = static_cast<std::int64_t>(blob.size() * sizeof(float));
            sidecar.write(reinterpret_cast<const char*>(blob.data()), bytes);
            json trec{{"type", "tuple"},    {"episode", e},          {"t", t},
                      {"state", ep.states[static_cast<std::size_t>(t)]}, {"actions", actions},
                      {"obs_offset", offset}, {"obs_bytes", bytes}};
            out << trec.dump() << "\n";
            offset += bytes;
            ++tuple_count;
        }
    }
    result.tuples = tuple_count;
    return result;
}

DemoDataset load_demos(const std::string& jsonl_path) {
    std::ifstream in(jsonl_path);
    if (!in) throw std::runtime_error("load_demos: cannot open " + jsonl_path);
    std::ifstream sidecar(sidecar_path_for(jsonl_path), std::ios::binary);
    if (!sidecar) throw std::runtime_error("load_demos: cannot open sidecar " + sidecar_path_for(jsonl_path));

    DemoDataset ds;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        std::string type = rec.at("type");
        if (type == "header") {
            ds.task = task_from_string(rec.at("task"));
            ds.horizon = rec.at("h");
            ds.action_dim = rec.at("action_dim");
            ds.state_dim = rec.at("state_dim");
            ds.views = rec.at("views");
            ds.image_size = rec.at("image_size");
            ds.seed = rec.at("seed");
            have_header = true;
        } else if (type == "episode") {
            EpisodeMeta em;
            em.seed = rec.at("seed");
            em.length = rec.at("length");
            em.success = rec.at("success");
            em.instruction.tokens = rec.at("instruction").get<std::vector<int>>();
            ds.episodes.push_back(std::move(em));
        } else if (type == "tuple") {
            DemoTuple tp;
            tp.episode = rec.at("episode");
            tp.t = rec.at("t");
            tp.state = rec.at("state").get<std::vector<float>>();
            for (const auto& row : rec.at("actions")) {
                for (const auto& v : row) tp.actions.push_back(v.get<float>());
            }
            tp.obs_offset = rec.at("obs_offset");
            tp.obs_bytes = rec.at("obs_bytes");
            ds.tuples.push_back(std::move(tp));
        } else {
            throw std::runtime_error("load_demos: unknown record type '" + type + "'");
        }
    }
    if (!have_header) throw std::runtime_error("load_demos: missing header record in " + jsonl_path);

    ds.obs_blobs.reserve(ds.tuples.size());
    for (const auto& tp : ds.tuples) {
        std::vector<float> blob(static_cast<std::size_t>(tp.obs_bytes) / sizeof(float));
        sidecar.seekg(tp.obs_offset);
        sidecar.read(reinterpret_cast<char*>(blob.data()), tp.obs_bytes);
        if (!sidecar) throw std::runtime_error("load_demos: truncated sidecar while reading tuple blob");
        ds.obs_blobs.push_back(std::move(blob));
    }
    return ds;
}

}  // namespace evoact
