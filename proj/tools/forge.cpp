// forge: command-line front end for the whole-body 3D pose toolkit.

#include <csignal>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "wbforge/annotation/server.hpp"
#include "wbforge/benchmark/crossval.hpp"
#include "wbforge/benchmark/direct.hpp"
#include "wbforge/benchmark/labels.hpp"
#include "wbforge/benchmark/lifter.hpp"
#include "wbforge/benchmark/masking.hpp"
#include "wbforge/benchmark/metrics.hpp"
#include "wbforge/completion/completion.hpp"
#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"
#include "wbforge/pipeline/pipeline.hpp"
#include "wbforge/refine/multiview.hpp"
#include "wbforge/refine/refiner.hpp"
#include "wbforge/synth/dataset.hpp"

using namespace wbforge;
namespace fs = std::filesystem;

namespace {

const KeypointLayout& L()
{
    return KeypointLayout::builtin();
}

Rig load_rig(const std::optional<fs::path>& rig, const fs::path& fallback_dir)
{
    if (rig)
        return Rig::load(*rig);
    if (fs::exists(fallback_dir / "rig.json"))
        return Rig::load(fallback_dir / "rig.json");
    spdlog::warn("no rig file given; using the default corner rig");
    return Rig::corner_rig();
}

std::vector<BenchmarkSample> pick(const std::vector<BenchmarkSample>& all, const std::vector<int>& ids)
{
    std::map<int, const BenchmarkSample*> by_id;
    for (const auto& s : all)
        by_id[s.id] = &s;
    std::vector<BenchmarkSample> out;
    for (int id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end())
            throw SchemaError("manifest lists unknown sample " + std::to_string(id));
        out.push_back(*it->second);
    }
    return out;
}

// Training samples of a synthesized dataset directory, via its train manifest.
std::vector<BenchmarkSample> train_split(const fs::path& data)
{
    const auto ds = read_dataset(data);
    if (!fs::exists(data / "train.txt"))
        throw Error(data.string() + " has no train.txt; run `forge split --out " + data.string() + "` first");
    return pick(ds.samples, read_manifest(data / "train.txt"));
}

// Hold out the last `fraction` of pose sets by id for validation.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> holdout(std::vector<T> all, double fraction)
{
    const size_t n_val = static_cast<size_t>(fraction * static_cast<double>(all.size()));
    std::vector<T> val(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
    all.resize(all.size() - n_val);
    return {std::move(all), std::move(val)};
}

nlohmann::json ids_of(const std::vector<KeypointProvenance>& prov, bool KeypointProvenance::*flag)
{
    auto out = nlohmann::json::array();
    for (size_t k = 0; k < prov.size(); ++k)
        if (prov[k].*flag)
            out.push_back(k + 1);
    return out;
}

// ---- synth / split ---------------------------------------------------------

void cmd_synth(int poses, std::uint64_t seed, const fs::path& out, const std::optional<fs::path>& rig_path, bool no_occlusion)
{
    const Rig rig = rig_path ? Rig::load(*rig_path) : Rig::corner_rig();
    CorpusConfig cc;
    cc.poses = poses;
    cc.seed = seed;
    if (no_occlusion)
        cc.occlusion = OcclusionConfig::none();
    const auto sets = synthesize_pose_sets(cc, rig);
    std::vector<BenchmarkSample> samples;
    for (const auto& s : sets)
        for (auto& b : benchmark_samples(s, rig))
            samples.push_back(std::move(b));
    fs::create_directories(out);
    rig.save(out / "rig.json");
    write_pose_sets(out, sets, rig);
    write_dataset(out, samples);
    write_json_atomic(out / "synth.json", {{"poses", poses}, {"seed", seed}, {"occlusion", !no_occlusion}});
    spdlog::info("wrote {} pose sets and {} samples to {}", sets.size(), samples.size(), out.string());
}

void cmd_split(const fs::path& dir, std::uint64_t seed)
{
    const auto ds = read_dataset(dir);
    const Splits sp = make_splits(ds.samples, seed);
    write_manifests(dir, sp);
    std::cout << "train " << sp.train.size() << "  test " << sp.test.size() << " (2D->3D " << sp.test_lift.size()
              << ", I2D->3D " << sp.test_ilift.size() << ")\n";
}

// ---- tasks: test inputs without labels, sealed labels, I2D masks ------------

void cmd_tasks(const fs::path& data, const fs::path& out, std::uint64_t mask_seed)
{
    const auto ds = read_dataset(data);
    const Splits sp = read_manifests(data);
    struct Task {
        const char* name;
        const std::vector<int>* ids;
    };
    for (const Task& t : {Task{"lift", &sp.test_lift}, Task{"ilift", &sp.test_ilift}, Task{"rgb", &sp.test}}) {
        const fs::path dir = out / t.name;
        fs::create_directories(dir);
        auto samples = pick(ds.samples, *t.ids);
        SealedLabels::seal(dir / "labels.jsonl", samples);
        if (std::string(t.name) == "ilift") {
            I2DMaskProtocol p;
            p.seed = mask_seed;
            MaskRecord rec;
            samples = apply_i2d_mask(samples, p, &rec);
            write_mask_file(dir / "masks.jsonl", rec);
        }
        write_dataset(dir / "inputs", strip_labels(samples));
        spdlog::info("task {}: {} test inputs in {}", t.name, samples.size(), dir.string());
    }
}

// ---- eval --------------------------------------------------------------------

void cmd_eval(const std::string& task, const fs::path& pred, const fs::path& labels, const std::optional<fs::path>& report)
{
    const auto sealed = SealedLabels::open(labels);
    const MetricReport r = sealed.evaluate(read_predictions(pred));
    nlohmann::json j = r.to_json();
    j["task"] = task;
    if (report)
        write_json_atomic(*report, j);
    std::cout << std::setw(8) << "task";
    for (const auto& c : MetricReport::columns())
        std::cout << std::setw(13) << c;
    std::cout << '\n' << std::setw(8) << task << r.table_row() << '\n';
}

// ---- train -------------------------------------------------------------------

void train_completion_cmd(const fs::path& data, const fs::path& out, const CompletionTrainConfig& tc, double val_fraction)
{
    const Rig rig = load_rig(std::nullopt, data);
    std::vector<CompletionSample> all;
    for (const auto& s : read_pose_sets(data, rig)) {
        if (s.world.size() == 0)
            throw SchemaError("pose set " + std::to_string(s.id) + " has no ground truth");
        all.push_back({s.world.coords, s.detections});
    }
    auto [train, val] = holdout(std::move(all), val_fraction);
    CompletionNet net(CompletionNetConfig::standard(), tc.seed);
    const auto h = train_completion(net, train, val, &rig, {}, tc);
    net.save(out, {{"layout", L().tag()}, {"best_val_mpjpe", h.best_val_mpjpe}});
    std::cout << "masked MPJPE " << h.initial_val_mpjpe << " -> " << h.best_val_mpjpe << " mm (epoch " << h.best_epoch + 1
              << "); saved " << out.string() << '\n';
}

void train_refiner_cmd(const std::string& part_name, int samples, int epochs, std::uint64_t seed, const fs::path& out)
{
    const RefinerPart part = refiner_part_from_string(part_name);
    RefinerModel model(RefinerConfig::for_part(part), seed);
    RefinerTrainConfig tc;
    tc.epochs = epochs;
    tc.seed = seed;
    const auto h = train_refiner(model, make_refiner_corpus(part, samples, derive_seed(seed, 1, 0)),
                                 make_refiner_corpus(part, std::max(20, samples / 10), derive_seed(seed, 2, 0)), tc);
    model.save(out);
    std::cout << part_name << " refiner: validation error " << h.initial_val_error << " -> " << h.best_val_error
              << " px; saved " << out.string() << '\n';
}

struct LifterArgs {
    std::string variant = "large";
    int width = 1024;
    double dropout = 0.2;
    bool masked = false;
    int crossval = 0;
    std::optional<fs::path> report;
};

void train_lifter_cmd(const fs::path& data, const std::optional<fs::path>& out, const LifterArgs& a, LifterTrainConfig tc)
{
    MLPLifterConfig cfg = lifter_variant_from_string(a.variant) == LifterVariant::simple ? MLPLifterConfig::simple(a.width)
                                                                                         : MLPLifterConfig::large(a.width);
    cfg.dropout = a.dropout;
    if (a.masked) {
        I2DMaskProtocol p;
        p.seed = derive_seed(tc.seed, 3, 0);
        tc.train_masks = p;
    }
    const auto train = train_split(data);
    if (a.crossval > 0) {
        std::optional<I2DMaskProtocol> hold;
        if (a.masked) {
            hold = I2DMaskProtocol{};
            hold->seed = derive_seed(tc.seed, 4, 0);
        }
        const auto summary = crossval(train, a.crossval, tc.seed, lifter_fold_method(cfg, tc, hold));
        std::cout << summary.table();
        if (a.report)
            write_json_atomic(*a.report, summary.to_json());
        return;
    }
    if (!out)
        throw ValidationError("--out is required unless --crossval is given");
    MLPLifter model(cfg, tc.seed);
    const auto h = train_lifter(model, train, {}, tc);
    model.save(*out);
    std::cout << a.variant << " lifter trained " << h.train_loss.size() << " epochs; saved " << out->string() << '\n';
}

void train_direct_cmd(const fs::path& data, const fs::path& out, const DirectTrainConfig& tc)
{
    DirectRegressor model(DirectRegressorConfig{}, tc.seed);
    const auto h = train_direct_regressor(model, train_split(data), {}, tc);
    model.save(out);
    std::cout << "direct regressor trained " << h.train_loss.size() << " epochs; saved " << out.string() << '\n';
}

// ---- baseline: predictions for a task's inputs ------------------------------

void cmd_baseline(const std::string& method, const std::optional<fs::path>& model, const fs::path& inputs,
                  const std::optional<fs::path>& data, const fs::path& out)
{
    const auto in = read_dataset(inputs).samples;
    const auto poses = inputs_of(in);
    std::vector<Coords3> pred;
    if (method == "mean") {
        if (!data)
            throw ValidationError("--method mean needs --data (the training dataset)");
        pred = MeanPoseLifter(train_split(*data)).lift(poses);
    } else if (!model) {
        throw ValidationError("--method " + method + " needs --model");
    } else if (method == "lifter") {
        pred = MLPLifter::load(*model).lift(poses);
    } else if (method == "direct") {
        pred = DirectRegressor::load(*model).predict(poses);
    } else {
        throw ValidationError("unknown method '" + method + "' (lifter, direct, mean)");
    }
    std::map<int, Coords3> byid;
    for (size_t i = 0; i < in.size(); ++i)
        byid[in[i].id] = pred[i];
    write_predictions(out, byid);
    spdlog::info("wrote {} predictions to {}", byid.size(), out.string());
}

// ---- complete / refine on loose pose files -----------------------------------

// kp3d rows may be null for missing keypoints.
std::pair<Pose3D, std::vector<KeypointStatus>> read_partial(const nlohmann::json& kp)
{
    if (!kp.is_array() || static_cast<int>(kp.size()) != L().total())
        throw SchemaError("kp3d must list " + std::to_string(L().total()) + " rows");
    Pose3D p{Coords3::Zero(L().total(), 3), Frame::world};
    std::vector<KeypointStatus> st(static_cast<size_t>(L().total()), KeypointStatus::unseen);
    for (int k = 0; k < L().total(); ++k) {
        if (kp[static_cast<size_t>(k)].is_null())
            continue;
        for (int a = 0; a < 3; ++a)
            p.coords(k, a) = kp[static_cast<size_t>(k)].at(static_cast<size_t>(a)).get<double>();
        st[static_cast<size_t>(k)] = KeypointStatus::triangulated;
    }
    return {p, st};
}

void cmd_complete(const fs::path& model, const fs::path& in, const fs::path& out)
{
    const CompletionNet net = CompletionNet::load(model);
    std::vector<nlohmann::json> lines;
    for (const auto& j : read_jsonl(in)) {
        auto [pose, st] = read_partial(j.at("kp3d"));
        const Pose3D done = complete(net, pose, st);
        auto filled = nlohmann::json::array();
        for (size_t k = 0; k < st.size(); ++k)
            if (st[k] != KeypointStatus::triangulated)
                filled.push_back(k + 1);
        lines.push_back({{"id", j.at("id")}, {"kp3d", coords_to_json(done.coords)}, {"completed", filled}});
    }
    write_jsonl_atomic(out, lines);
    spdlog::info("completed {} poses", lines.size());
}

void cmd_refine(const fs::path& face, const fs::path& hand, const fs::path& in, const fs::path& rig_path, const fs::path& out,
                const std::optional<fs::path>& gt_path, int iterations, std::uint64_t seed)
{
    const Rig rig = Rig::load(rig_path);
    const RefinerModel fm = RefinerModel::load(face), hm = RefinerModel::load(hand);
    const RefinerSet set{&fm, &hm};
    std::map<int, Coords3> gt;
    if (gt_path)
        for (const auto& j : read_jsonl(*gt_path))
            gt[j.at("id").get<int>()] = coords3_from_json(j.at("kp3d"), L().total());

    MultiviewRefineOptions opt;
    opt.iterations = iterations;
    std::vector<nlohmann::json> lines;
    bool warned = false;
    for (const auto& j : read_jsonl(in)) {
        const int id = j.at("id").get<int>();
        const Pose3D pose{coords3_from_json(j.at("kp3d"), L().total()), Frame::world};
        std::unique_ptr<ConditioningProvider> provider;
        if (const auto it = gt.find(id); it != gt.end()) {
            provider = std::make_unique<SyntheticConditioning>(Pose3D{it->second, Frame::world}, rig);
        } else if (j.contains("images")) {
            if (!warned)
                spdlog::warn("RGB conditioning uses an untrained colour map; results are not meaningful");
            warned = true;
            std::vector<RgbImage> views;
            for (const auto& cam : rig.cameras())
                views.push_back(RgbImage::load_ppm(j.at("images").at(cam.id).get<std::string>()));
            provider = std::make_unique<RgbConditioning>(std::move(views), L().total(), seed);
        } else {
            throw ValidationError("pose " + std::to_string(id) + ": no conditioning (pass --gt or give \"images\")");
        }
        const auto res = refine_pose_views(pose, rig, set, *provider, opt);
        auto parts = nlohmann::json::array();
        for (const auto& p : res.parts) {
            parts.push_back({{"part", to_string(p.part)},
                             {"views", {rig.camera(std::max(p.views.first, 0)).id, rig.camera(std::max(p.views.second, 0)).id}},
                             {"mean_shift_px", p.mean_shift_px},
                             {"skipped", p.skipped}});
        }
        lines.push_back({{"id", id}, {"kp3d", coords_to_json(res.pose.coords)}, {"parts", parts}});
    }
    write_jsonl_atomic(out, lines);
    spdlog::info("refined {} poses", lines.size());
}

// ---- pipeline ----------------------------------------------------------------

void cmd_pipeline(const fs::path& detections, const std::optional<fs::path>& rig_path, const fs::path& ckpts, int quota,
                  const fs::path& out, const std::string& policy, bool score, const std::string& aggregation)
{
    const Rig rig = load_rig(rig_path, detections);
    const auto sets = read_pose_sets(detections, rig);
    const CompletionNet net = CompletionNet::load(ckpts / "completion.ckpt");
    const RefinerModel fm = RefinerModel::load(ckpts / "face.ckpt"), hm = RefinerModel::load(ckpts / "hand.ckpt");

    PipelineConfig cfg;
    cfg.quota = quota;
    cfg.refine = refine_policy_from_string(policy);
    cfg.score = score;
    cfg.quality.aggregation = score_aggregation_from_string(aggregation);
    const auto res = run_pipeline(sets, rig, net, RefinerSet{&fm, &hm}, synthetic_provider(rig), cfg);

    fs::create_directories(out);
    rig.save(out / "rig.json");
    std::vector<nlohmann::json> lines;
    for (const auto& p : res.poses) {
        nlohmann::json j{{"id", p.id},
                         {"subject", p.subject},
                         {"class", to_string(p.cls)},
                         {"kp3d", coords_to_json(p.pose.coords)},
                         {"provenance",
                          {{"triangulated", ids_of(p.provenance, &KeypointProvenance::triangulated)},
                           {"completed", ids_of(p.provenance, &KeypointProvenance::completed)},
                           {"refined", ids_of(p.provenance, &KeypointProvenance::refined)}}}};
        if (p.quality)
            j["quality"] = p.quality->to_json();
        lines.push_back(std::move(j));
    }
    write_jsonl_atomic(out / "poses.jsonl", lines);
    std::string retained;
    for (int id : res.report.selection.retained)
        retained += std::to_string(id) + "\n";
    write_text_atomic(out / "retained.txt", retained);
    write_json_atomic(out / "report.json", res.report.to_json());
    const std::string table = res.report.table();
    write_text_atomic(out / "report.txt", table);
    std::cout << table;
}

// ---- annotate ----------------------------------------------------------------

void cmd_annotate(const fs::path& data, const std::string& host, int port, int review, std::uint64_t seed,
                  const std::optional<fs::path>& store_path, const std::optional<fs::path>& ui)
{
    const Rig rig = Rig::load(data / "rig.json");
    const ReviewSet set = ReviewSet::draw(rig, read_review_pool(data), review, seed);
    CorrectionStore store(store_path ? *store_path : data / "corrections.jsonl");
    AnnotationServerOptions opt;
    opt.ui_dir = ui;
    AnnotationServer server(set, store, opt);
    const int bound = server.bind(host, port);
    spdlog::info("serving {} review samples on http://{}:{} (corrections in {})", set.samples().size(), host, bound,
                 store.path().string());
    // Signals are taken by a waiting thread instead of a handler, so stop() runs in normal context.
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    sigaddset(&sigs, SIGUSR1);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&sigs, &sig);
        if (sig != SIGUSR1)
            spdlog::info("shutting down");
        server.stop();
    });
    server.listen();
    pthread_kill(waiter.native_handle(), SIGUSR1); // listen() ended on its own: release the waiter
    waiter.join();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"forge: whole-body 3D pose dataset toolkit"};
    app.require_subcommand(1);
    app.add_flag_callback("-v,--verbose", [] { spdlog::set_level(spdlog::level::debug); }, "Debug logging");
    app.add_flag_callback("-q,--quiet", [] { spdlog::set_level(spdlog::level::warn); }, "Warnings and errors only");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view corpus");
    int s_poses = 1000;
    std::uint64_t s_seed = 0;
    fs::path s_out;
    std::optional<fs::path> s_rig;
    bool s_clean = false;
    synth->add_option("--poses", s_poses, "Number of pose sets")->check(CLI::PositiveNumber);
    synth->add_option("--seed", s_seed, "Master seed");
    synth->add_option("--out", s_out, "Output directory")->required();
    synth->add_option("--rig", s_rig, "Rig JSON (default: corner rig)")->check(CLI::ExistingFile);
    synth->add_flag("--no-occlusion", s_clean, "Noiseless, fully visible detections");
    synth->callback([&] { cmd_synth(s_poses, s_seed, s_out, s_rig, s_clean); });

    // split
    auto* split = app.add_subcommand("split", "Write subject-based split manifests");
    fs::path sp_dir;
    std::uint64_t sp_seed = 0;
    split->add_option("--out", sp_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    split->add_option("--seed", sp_seed, "Seed of the test half split");
    split->callback([&] { cmd_split(sp_dir, sp_seed); });

    // tasks
    auto* tasks = app.add_subcommand("tasks", "Build label-free test inputs, sealed labels and I2D masks");
    fs::path t_data, t_out;
    std::uint64_t t_seed = 0;
    tasks->add_option("--data", t_data, "Dataset directory with manifests")->required()->check(CLI::ExistingDirectory);
    tasks->add_option("--out", t_out, "Output directory")->required();
    tasks->add_option("--mask-seed", t_seed, "Seed of the I2D test masks");
    tasks->callback([&] { cmd_tasks(t_data, t_out, t_seed); });

    // complete
    auto* comp = app.add_subcommand("complete", "Fill missing keypoints of 3D poses");
    fs::path c_model, c_in, c_out;
    comp->add_option("--model", c_model, "Completion checkpoint")->required()->check(CLI::ExistingFile);
    comp->add_option("--in", c_in, "JSON lines {id, kp3d} with null rows for missing keypoints")->required()->check(CLI::ExistingFile);
    comp->add_option("--out", c_out, "Output JSON lines")->required();
    comp->callback([&] { cmd_complete(c_model, c_in, c_out); });

    // refine
    auto* ref = app.add_subcommand("refine", "Refine face and hands of 3D poses through 2D refinement");
    fs::path r_face, r_hand, r_in, r_rig, r_out;
    std::optional<fs::path> r_gt;
    int r_iters = 10;
    std::uint64_t r_seed = 0;
    ref->add_option("--face", r_face, "Face refiner checkpoint")->required()->check(CLI::ExistingFile);
    ref->add_option("--hand", r_hand, "Hand refiner checkpoint")->required()->check(CLI::ExistingFile);
    ref->add_option("--in", r_in, "JSON lines {id, kp3d[, images]}")->required()->check(CLI::ExistingFile);
    ref->add_option("--rig", r_rig, "Rig JSON")->required()->check(CLI::ExistingFile);
    ref->add_option("--out", r_out, "Output JSON lines")->required();
    ref->add_option("--gt", r_gt, "World ground truth {id, kp3d} for synthetic conditioning")->check(CLI::ExistingFile);
    ref->add_option("--iterations", r_iters, "Refinement iterations")->check(CLI::NonNegativeNumber);
    ref->add_option("--seed", r_seed, "Seed of the RGB colour map");
    ref->callback([&] { cmd_refine(r_face, r_hand, r_in, r_rig, r_out, r_gt, r_iters, r_seed); });

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Triangulate, complete, refine, score and select");
    fs::path p_det, p_ckpts, p_out;
    std::optional<fs::path> p_rig;
    int p_quota = 50;
    std::string p_policy = "completed_parts", p_agg = "view_then_part";
    bool p_no_score = false;
    pipe->add_option("--detections", p_det, "Pose-set directory (detections.jsonl[, ground_truth.jsonl])")
        ->required()
        ->check(CLI::ExistingDirectory);
    pipe->add_option("--rig", p_rig, "Rig JSON (default: <detections>/rig.json)")->check(CLI::ExistingFile);
    pipe->add_option("--ckpts", p_ckpts, "Directory with completion.ckpt, face.ckpt, hand.ckpt")
        ->required()
        ->check(CLI::ExistingDirectory);
    pipe->add_option("--quota", p_quota, "Poses kept per subject")->check(CLI::NonNegativeNumber);
    pipe->add_option("--out", p_out, "Output directory")->required();
    pipe->add_option("--refine", p_policy, "completed_parts | all_parts | none");
    pipe->add_option("--aggregation", p_agg, "view_then_part | part_then_view");
    pipe->add_flag("--no-score", p_no_score, "Skip multi-crop scoring and selection");
    pipe->callback([&] { cmd_pipeline(p_det, p_rig, p_ckpts, p_quota, p_out, p_policy, !p_no_score, p_agg); });

    // eval
    auto* ev = app.add_subcommand("eval", "Score predictions against sealed labels");
    std::string e_task;
    fs::path e_pred, e_labels;
    std::optional<fs::path> e_report;
    ev->add_option("--task", e_task, "lift | ilift | rgb")->required()->check(CLI::IsMember({"lift", "ilift", "rgb"}));
    ev->add_option("--pred", e_pred, "Predictions JSON lines {id, kp3d}")->required()->check(CLI::ExistingFile);
    ev->add_option("--labels", e_labels, "Sealed labels file")->required()->check(CLI::ExistingFile);
    ev->add_option("--report", e_report, "Metric report JSON");
    ev->callback([&] { cmd_eval(e_task, e_pred, e_labels, e_report); });

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    train->require_subcommand(1);
    std::uint64_t tr_seed = 0;
    int tr_epochs = 0, tr_batch = 0;
    double tr_seconds = 0.0;
    train->add_option("--seed", tr_seed, "Seed");
    train->add_option("--epochs", tr_epochs, "Epochs (0 = model default)")->check(CLI::NonNegativeNumber);
    train->add_option("--batch", tr_batch, "Batch size (0 = model default)")->check(CLI::NonNegativeNumber);
    train->add_option("--max-seconds", tr_seconds, "Wall-clock budget, 0 = none");

    auto* t_comp = train->add_subcommand("completion", "Completion transformer from a pose-set directory");
    fs::path tc_data, tc_out;
    double tc_val = 0.1;
    t_comp->add_option("--data", tc_data, "Pose-set directory with ground truth")->required()->check(CLI::ExistingDirectory);
    t_comp->add_option("--out", tc_out, "Checkpoint")->required();
    t_comp->add_option("--val", tc_val, "Validation fraction")->check(CLI::Range(0.0, 0.5));
    t_comp->callback([&] {
        CompletionTrainConfig tc;
        tc.seed = tr_seed;
        if (tr_epochs)
            tc.epochs = tr_epochs;
        if (tr_batch)
            tc.batch = tr_batch;
        tc.max_seconds = tr_seconds;
        train_completion_cmd(tc_data, tc_out, tc, tc_val);
    });

    auto* t_ref = train->add_subcommand("refiner", "Face or hand refiner on synthetic crops");
    std::string trf_part;
    int trf_samples = 2000;
    fs::path trf_out;
    t_ref->add_option("--part", trf_part, "face | hand")->required()->check(CLI::IsMember({"face", "hand"}));
    t_ref->add_option("--samples", trf_samples, "Training crops")->check(CLI::PositiveNumber);
    t_ref->add_option("--out", trf_out, "Checkpoint")->required();
    t_ref->callback([&] { train_refiner_cmd(trf_part, trf_samples, tr_epochs ? tr_epochs : 10, tr_seed, trf_out); });

    auto* t_lift = train->add_subcommand("lifter", "MLP lifter on the train split (or k-fold cross-validation)");
    fs::path tl_data;
    std::optional<fs::path> tl_out;
    LifterArgs la;
    t_lift->add_option("--data", tl_data, "Dataset directory with manifests")->required()->check(CLI::ExistingDirectory);
    t_lift->add_option("--out", tl_out, "Checkpoint");
    t_lift->add_option("--variant", la.variant, "simple | large")->check(CLI::IsMember({"simple", "large"}));
    t_lift->add_option("--width", la.width, "Hidden width")->check(CLI::PositiveNumber);
    t_lift->add_option("--dropout", la.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.9));
    t_lift->add_flag("--masked", la.masked, "Train on I2D-masked inputs");
    t_lift->add_option("--crossval", la.crossval, "Run k-fold cross-validation instead of a single fit");
    t_lift->add_option("--report", la.report, "Cross-validation report JSON");
    t_lift->callback([&] {
        LifterTrainConfig tc;
        tc.seed = tr_seed;
        if (tr_epochs)
            tc.epochs = tr_epochs;
        if (tr_batch)
            tc.batch = tr_batch;
        tc.max_seconds = tr_seconds;
        train_lifter_cmd(tl_data, tl_out, la, tc);
    });

    auto* t_dir = train->add_subcommand("direct", "Direct 3D regressor over keypoint renders");
    fs::path td_data, td_out;
    t_dir->add_option("--data", td_data, "Dataset directory with manifests")->required()->check(CLI::ExistingDirectory);
    t_dir->add_option("--out", td_out, "Checkpoint")->required();
    t_dir->callback([&] {
        DirectTrainConfig tc;
        tc.seed = tr_seed;
        if (tr_epochs)
            tc.epochs = tr_epochs;
        if (tr_batch)
            tc.batch = tr_batch;
        tc.max_seconds = tr_seconds;
        train_direct_cmd(td_data, td_out, tc);
    });

    // baseline
    auto* base = app.add_subcommand("baseline", "Predict 3D poses for a task's test inputs");
    std::string b_method;
    std::optional<fs::path> b_model, b_data;
    fs::path b_inputs, b_out;
    base->add_option("--method", b_method, "lifter | direct | mean")->required()->check(CLI::IsMember({"lifter", "direct", "mean"}));
    base->add_option("--model", b_model, "Checkpoint (lifter, direct)")->check(CLI::ExistingFile);
    base->add_option("--data", b_data, "Training dataset (mean)")->check(CLI::ExistingDirectory);
    base->add_option("--inputs", b_inputs, "Task inputs directory")->required()->check(CLI::ExistingDirectory);
    base->add_option("--out", b_out, "Predictions JSON lines")->required();
    base->callback([&] { cmd_baseline(b_method, b_model, b_inputs, b_data, b_out); });

    // annotate
    auto* ann = app.add_subcommand("annotate", "Serve the cross-check annotation API");
    fs::path a_data;
    std::string a_host = "127.0.0.1";
    int a_port = 8080, a_review = 600;
    std::uint64_t a_seed = 0;
    std::optional<fs::path> a_store, a_ui;
    ann->add_option("--data", a_data, "Directory with rig.json and poses.jsonl")->required()->check(CLI::ExistingDirectory);
    ann->add_option("--port", a_port, "Port (0 = any free port)")->check(CLI::Range(0, 65535));
    ann->add_option("--host", a_host, "Bind address");
    ann->add_option("--review", a_review, "Review-set size")->check(CLI::NonNegativeNumber);
    ann->add_option("--seed", a_seed, "Review-set sampling seed");
    ann->add_option("--store", a_store, "Correction log (default: <data>/corrections.jsonl)");
    ann->add_option("--ui", a_ui, "Static UI bundle directory")->check(CLI::ExistingDirectory);
    ann->callback([&] { cmd_annotate(a_data, a_host, a_port, a_review, a_seed, a_store, a_ui); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
