#pragma once

// Command-line front end. run() is separate from main() so tests can drive
// it in-process with captured streams.

#include <heart/heart.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace heart::cli
{

namespace fs = std::filesystem;

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kIoError = 2;

namespace detail
{

/// HEMB inputs: explicit files plus every file named by a manifest.
inline std::vector<EmbeddingSequence> load_inputs(const std::vector<std::string>& files, const std::string& manifest)
{
  std::vector<EmbeddingSequence> out;
  for (const auto& f : files) {
    out.push_back(read_sequence_file(f));
  }
  if (!manifest.empty()) {
    for (auto& s : read_manifest_sequences(manifest)) {
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::EmptyInput, "load_inputs", "no input sequences given");
  }
  return out;
}

/// Writes text to a file, or to out when the path is empty or "-".
inline void emit(const std::string& path, const std::string& text, std::ostream& out)
{
  if (path.empty() || path == "-") {
    out << text;
    if (!out) {
      throw Error(ErrorCode::SinkFailure, "emit", "standard output rejected write");
    }
    return;
  }
  io::write_file_atomic(path, text);
}

/// Directions from one role per sequence, or from every row when role is "rows".
inline std::vector<Direction> sample_directions(const std::vector<EmbeddingSequence>& seqs, const std::string& role)
{
  std::vector<Direction> out;
  for (const auto& s : seqs) {
    if (role == "rows") {
      for (Index p = 0; p < s.length(); ++p) {
        out.push_back(normalize(s.row(p)).direction);
      }
    } else {
      out.push_back(normalize(role_embedding(s, role_from_string(role))).direction);
    }
  }
  return out;
}

/// Mean direction stored in any model artifact that has one.
inline Direction anchor_direction(const std::string& path)
{
  const ModelArtifact a = read_model(path);
  if (const auto* m = std::get_if<ConceptAnchor>(&a.model)) {
    return m->mu();
  }
  if (const auto* m = std::get_if<KentModel>(&a.model)) {
    return m->mu;
  }
  if (const auto* m = std::get_if<VmfModel>(&a.model)) {
    return m->mu;
  }
  throw Error(ErrorCode::SchemaViolation, "read_model", path + " holds no anchor direction");
}

inline std::string angles_csv(const EditResult& r)
{
  std::string out = "position,token,weight,angle\n";
  for (Index p = 0; p < r.edited.length(); ++p) {
    const auto it = r.plan_used.per_token_weight.find(p);
    const double w = it == r.plan_used.per_token_weight.end() ? 0.0 : it->second;
    out += std::to_string(p) + ',' + csv::field(r.edited.tokens[static_cast<std::size_t>(p)]) + ',' +
           csv::number(w) + ',' + csv::number(r.per_token_angle_moved[static_cast<std::size_t>(p)]) + '\n';
  }
  return out;
}

/// Plan options shared by the edit subcommands; flags override the plan file.
struct PlanFlags {
  std::string plan_file;
  double lambda = 1.0;
  double tau = 0.5;
  double inject_fraction = 0.10;
  bool edit_eot = true;
  bool edit_pad = true;
  bool downstream = true;
  bool upstream = false;
  std::vector<CLI::Option*> opts{8, nullptr};

  void add_to(CLI::App& app)
  {
    app.add_option("--plan", plan_file, "EditPlan JSON; flags given on the command line win");
    opts[0] = app.add_option("--lambda", lambda, "edit strength");
    opts[1] = app.add_option("--tau", tau, "contamination decay scale (radians)")->check(CLI::PositiveNumber);
    opts[2] = app.add_option("--inject-fraction", inject_fraction, "delayed-injection fraction")
                ->check(CLI::Range(0.0, 0.5));
    opts[3] = app.add_flag("--edit-eot,!--no-edit-eot", edit_eot, "edit the EOT row");
    opts[4] = app.add_flag("--edit-pad,!--no-edit-pad", edit_pad, "edit PAD rows");
    opts[5] = app.add_flag("--downstream,!--no-downstream", downstream, "propagate to downstream tokens");
    opts[6] = app.add_flag("--upstream,!--no-upstream", upstream, "propagate to upstream tokens");
  }

  EditPlan resolve() const
  {
    EditPlan plan;
    if (!plan_file.empty()) {
      json j;
      try {
        j = json::parse(io::read_file(plan_file));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, "read_plan", plan_file + ": " + e.what());
      }
      plan = plan_from_json(j);
    }
    auto given = [this](int i) { return opts[static_cast<std::size_t>(i)]->count() > 0; };
    if (given(0)) plan.lambda = lambda;
    if (given(1)) plan.tau = tau;
    if (given(2)) plan.inject_fraction = inject_fraction;
    if (given(3)) plan.edit_eot = edit_eot;
    if (given(4)) plan.edit_pad = edit_pad;
    if (given(5)) plan.propagate_downstream = downstream;
    if (given(6)) plan.propagate_upstream = upstream;
    validate(plan, "plan");
    return plan;
  }
};

}  // namespace detail

/**
 * Parses argv and runs one subcommand. Machine output goes to out (or to
 * the files named by flags), diagnostics to err. Returns 0 on success, 1 on
 * validation errors and 2 on I/O errors.
 */
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Directional statistics and hypersphere embedding edits", "heart"};
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags win");
  app.require_subcommand(1);
  std::function<void()> action;

  // fit
  struct {
    std::vector<std::string> inputs;
    std::string manifest, role = "rows", out_json, out_csv, concept_name, encoder;
    int k = 2;
    std::uint64_t seed = 0;
    bool mle = true;
  } fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit vMF, moVMF and Kent and select by BIC");
  fit_cmd->add_option("inputs", fit.inputs, "HEMB files");
  fit_cmd->add_option("--manifest", fit.manifest, "manifest listing HEMB files");
  fit_cmd->add_option("--role", fit.role, "rows | subject | eot | pad")
    ->check(CLI::IsMember({"rows", "subject", "eot", "pad"}));
  fit_cmd->add_option("-K,--components", fit.k, "moVMF components")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "seed for moVMF initialization");
  fit_cmd->add_flag("--mle,!--no-mle", fit.mle, "refine the Kent fit by maximum likelihood");
  fit_cmd->add_option("--out", fit.out_json, "report JSON path ('-' for stdout)");
  fit_cmd->add_option("--csv", fit.out_csv, "append-free CSV table row path");
  fit_cmd->add_option("--concept", fit.concept_name, "concept label for the CSV row");
  fit_cmd->add_option("--encoder", fit.encoder, "encoder label for the CSV row");
  fit_cmd->callback([&] {
    action = [&] {
      const auto seqs = detail::load_inputs(fit.inputs, fit.manifest);
      const auto dirs = detail::sample_directions(seqs, fit.role);
      SelectOptions opts;
      opts.movmf_components = fit.k;
      opts.seed = fit.seed;
      opts.kent.refine_mle = fit.mle;
      const FitReport report = select_model(dirs, opts);
      for (const auto& c : report.candidates) {
        if (!c.ok) {
          err << "heart fit: " << c.tag << " candidate failed: " << c.error << "\n";
        }
      }
      detail::emit(fit.out_json, to_json(report).dump(2) + "\n", out);
      if (!fit.out_csv.empty()) {
        const std::string encoder = fit.encoder.empty() ? seqs.front().model_tag : fit.encoder;
        detail::emit(fit.out_csv, fit_report_csv_header() + fit_report_csv_row(report, fit.concept_name, encoder),
                     out);
      }
    };
  });

  // anchor
  struct {
    std::vector<std::string> inputs;
    std::string manifest, role = "subject", concept_name, out_path;
    std::size_t min_pool = kMinPoolSize;
    bool mle = true;
  } anc;
  auto* anchor_cmd = app.add_subcommand("anchor", "estimate a concept anchor from a prompt pool");
  anchor_cmd->add_option("inputs", anc.inputs, "HEMB files, one per prompt");
  anchor_cmd->add_option("--manifest", anc.manifest, "manifest listing HEMB files");
  anchor_cmd->add_option("--role", anc.role, "subject | eot | pad")->check(CLI::IsMember({"subject", "eot", "pad"}));
  anchor_cmd->add_option("--concept", anc.concept_name, "concept label");
  anchor_cmd->add_option("--min-pool", anc.min_pool, "smallest accepted pool");
  anchor_cmd->add_flag("--mle,!--no-mle", anc.mle, "refine the Kent fit by maximum likelihood");
  anchor_cmd->add_option("--out", anc.out_path, "anchor model file")->required();
  anchor_cmd->callback([&] {
    action = [&] {
      const auto seqs = detail::load_inputs(anc.inputs, anc.manifest);
      if (seqs.size() < kRecommendedPoolSize) {
        err << "heart anchor: warning: pool of " << seqs.size() << " is below the recommended "
            << kRecommendedPoolSize << "\n";
      }
      AnchorOptions opts;
      opts.min_pool_size = anc.min_pool;
      opts.kent.refine_mle = anc.mle;
      const ConceptAnchor a = estimate_anchor(seqs, role_from_string(anc.role), anc.concept_name, opts);
      write_model(anc.out_path, {a, {std::nullopt, a.sample_count}});
    };
  });

  // attr-dir
  struct {
    std::string negative, positive, out_path, concept_name, neg_label, pos_label;
  } attr;
  auto* attr_cmd = app.add_subcommand("attr-dir", "tangent attribute direction between two anchors");
  attr_cmd->add_option("--negative", attr.negative, "anchor file for a-")->required();
  attr_cmd->add_option("--positive", attr.positive, "anchor file for a+")->required();
  attr_cmd->add_option("--concept", attr.concept_name, "concept label");
  attr_cmd->add_option("--negative-label", attr.neg_label, "text of a-");
  attr_cmd->add_option("--positive-label", attr.pos_label, "text of a+");
  attr_cmd->add_option("--out", attr.out_path, "attribute direction file")->required();
  attr_cmd->callback([&] {
    action = [&] {
      AttributeDirection d =
        attribute_direction(detail::anchor_direction(attr.negative), detail::anchor_direction(attr.positive));
      d.concept_name = attr.concept_name;
      d.negative = attr.neg_label;
      d.positive = attr.pos_label;
      write_model(attr.out_path, {d, {}});
    };
  });

  // edit-subject
  struct {
    std::string input, source, target, eot_source, eot_target, pad_source, pad_target, out_path, angles;
    detail::PlanFlags plan;
  } es;
  auto* es_cmd = app.add_subcommand("edit-subject", "replace the subject along the anchor geodesic");
  es_cmd->add_option("--input", es.input, "HEMB sequence")->required();
  es_cmd->add_option("--source", es.source, "source subject anchor")->required();
  es_cmd->add_option("--target", es.target, "target subject anchor")->required();
  es_cmd->add_option("--eot-source", es.eot_source, "source EOT anchor");
  es_cmd->add_option("--eot-target", es.eot_target, "target EOT anchor");
  es_cmd->add_option("--pad-source", es.pad_source, "source PAD anchor");
  es_cmd->add_option("--pad-target", es.pad_target, "target PAD anchor");
  es_cmd->add_option("--out", es.out_path, "edited HEMB")->required();
  es_cmd->add_option("--angles", es.angles, "per-token angle CSV");
  es.plan.add_to(*es_cmd);
  es_cmd->callback([&] {
    action = [&] {
      const EditPlan plan = es.plan.resolve();
      const EmbeddingSequence seq = read_sequence_file(es.input);
      SubjectAnchors anchors{detail::anchor_direction(es.source), detail::anchor_direction(es.target), {}, {}, {}, {}};
      if (!es.eot_source.empty() != !es.eot_target.empty() || !es.pad_source.empty() != !es.pad_target.empty()) {
        throw Error(ErrorCode::PreconditionViolated, "edit-subject", "role anchors come in source/target pairs");
      }
      if (!es.eot_source.empty()) {
        anchors.eot_source = detail::anchor_direction(es.eot_source);
        anchors.eot_target = detail::anchor_direction(es.eot_target);
      }
      if (!es.pad_source.empty()) {
        anchors.pad_source = detail::anchor_direction(es.pad_source);
        anchors.pad_target = detail::anchor_direction(es.pad_target);
      }
      const EditResult r = edit_subject_sequence(seq, anchors, plan);
      write_sequence_file(r.edited, es.out_path);
      if (!es.angles.empty()) {
        detail::emit(es.angles, detail::angles_csv(r), out);
      }
    };
  });

  // edit-attribute
  struct {
    std::string input, direction, out_path, angles;
    detail::PlanFlags plan;
  } ea;
  auto* ea_cmd = app.add_subcommand("edit-attribute", "move tokens along an attribute direction");
  ea_cmd->add_option("--input", ea.input, "HEMB sequence")->required();
  ea_cmd->add_option("--direction", ea.direction, "attribute direction file")->required();
  ea_cmd->add_option("--out", ea.out_path, "edited HEMB")->required();
  ea_cmd->add_option("--angles", ea.angles, "per-token angle CSV");
  ea.plan.add_to(*ea_cmd);
  ea_cmd->callback([&] {
    action = [&] {
      const EditPlan plan = ea.plan.resolve();
      const EmbeddingSequence seq = read_sequence_file(ea.input);
      const AttributeDirection dir = model_as<AttributeDirection>(read_model(ea.direction), "attribute_direction");
      const EditResult r = edit_attribute_sequence(seq, dir, plan);
      write_sequence_file(r.edited, ea.out_path);
      if (!ea.angles.empty()) {
        detail::emit(ea.angles, detail::angles_csv(r), out);
      }
    };
  });

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "geometry diagnostics");
  probe_cmd->require_subcommand(1);

  struct {
    std::vector<std::string> inputs;
    std::string manifest, encoder, out_path;
    bool include_special = false;
  } thin;
  auto* thin_cmd = probe_cmd->add_subcommand("thinness", "coefficient of variation of token norms");
  thin_cmd->add_option("inputs", thin.inputs, "HEMB files");
  thin_cmd->add_option("--manifest", thin.manifest, "manifest listing HEMB files");
  thin_cmd->add_option("--encoder", thin.encoder, "encoder label (default: first model_tag)");
  thin_cmd->add_flag("--include-special", thin.include_special, "count BOS/EOT/PAD rows too");
  thin_cmd->add_option("--out", thin.out_path, "CSV path ('-' for stdout)");
  thin_cmd->callback([&] {
    action = [&] {
      const auto seqs = detail::load_inputs(thin.inputs, thin.manifest);
      const ThinnessReport r = thinness(
        seqs, thin.include_special, thin.encoder.empty() ? std::nullopt : std::optional<std::string>(thin.encoder));
      detail::emit(thin.out_path, thinness_csv(std::span(&r, 1)), out);
    };
  });

  struct {
    std::string query, vocab, out_path, name;
    std::optional<Index> row;
    std::size_t k = 10;
  } nn;
  auto* nn_cmd = probe_cmd->add_subcommand("nn", "linear vs angular nearest neighbors");
  nn_cmd->add_option("--query", nn.query, "HEMB holding the query")->required();
  nn_cmd->add_option("--row", nn.row, "query row (default: subject_index, else 0)");
  nn_cmd->add_option("--vocab", nn.vocab, "HEMB whose rows and tokens form the vocabulary")->required();
  nn_cmd->add_option("-k", nn.k, "neighbors per metric")->check(CLI::PositiveNumber);
  nn_cmd->add_option("--out", nn.out_path, "CSV path ('-' for stdout)");
  nn_cmd->callback([&] {
    action = [&] {
      const EmbeddingSequence q = read_sequence_file(nn.query);
      const EmbeddingSequence v = read_sequence_file(nn.vocab);
      const Index row = nn.row.value_or(q.subject_index.value_or(0));
      if (row < 0 || row >= q.length()) {
        throw Error(ErrorCode::PreconditionViolated, "probe nn", "--row " + std::to_string(row) + " out of range");
      }
      std::vector<VocabEntry> vocab;
      for (Index p = 0; p < v.length(); ++p) {
        vocab.emplace_back(v.tokens[static_cast<std::size_t>(p)], v.row(p));
      }
      const NnReport r = nearest_neighbors(q.row(row), vocab, nn.k, q.tokens[static_cast<std::size_t>(row)]);
      detail::emit(nn.out_path, nn_csv(r), out);
    };
  });

  struct {
    std::string a, b, out_path;
  } con;
  auto* con_cmd = probe_cmd->add_subcommand("contamination", "per-position angles between two aligned prompts");
  con_cmd->add_option("--a", con.a, "first HEMB")->required();
  con_cmd->add_option("--b", con.b, "second HEMB (concept swapped)")->required();
  con_cmd->add_option("--out", con.out_path, "CSV path ('-' for stdout)");
  con_cmd->callback([&] {
    action = [&] {
      const ContaminationReport r = contamination(read_sequence_file(con.a), read_sequence_file(con.b));
      err << "heart probe contamination: upstream_mean=" << csv::number(r.upstream_mean)
          << " downstream_mean=" << csv::number(r.downstream_mean) << " asymmetry=" << csv::number(r.asymmetry)
          << " eot=" << csv::number(r.eot_angle) << "\n";
      detail::emit(con.out_path, contamination_csv(r), out);
    };
  });

  struct {
    std::string input, out_dir;
    std::vector<double> scales{kMagnitudeScales.begin(), kMagnitudeScales.end()};
  } mag;
  auto* mag_cmd = probe_cmd->add_subcommand("magnitude", "rescaled copies of a sequence");
  mag_cmd->add_option("--input", mag.input, "HEMB sequence")->required();
  mag_cmd->add_option("--scales", mag.scales, "scale factors")->delimiter(',');
  mag_cmd->add_option("--out-dir", mag.out_dir, "directory for variants and manifest")->required();
  mag_cmd->callback([&] {
    action = [&] {
      const auto variants = magnitude_variants(read_sequence_file(mag.input), mag.scales);
      std::error_code ec;
      fs::create_directories(mag.out_dir, ec);
      if (ec) {
        throw Error(ErrorCode::SinkFailure, "probe magnitude", mag.out_dir + ": " + ec.message());
      }
      std::vector<std::string> names;
      for (std::size_t i = 0; i < variants.size(); ++i) {
        names.push_back("scale_" + std::to_string(i) + "_" + csv::number(mag.scales[i]) + ".hemb");
        write_sequence_file(variants[i], fs::path(mag.out_dir) / names.back());
      }
      write_manifest(fs::path(mag.out_dir) / "manifest.txt", names);
    };
  });

  // synth
  struct {
    std::string kind, out_path;
    int dim = 16;
    double kappa = 50.0;
    double beta_ratio = 0.0;
    std::size_t n = 5000;
    std::uint64_t seed = 0;
  } syn;
  auto* syn_cmd = app.add_subcommand("synth", "sample synthetic directions into a HEMB file");
  syn_cmd->add_option("kind", syn.kind, "vmf | kent")->required()->check(CLI::IsMember({"vmf", "kent"}));
  syn_cmd->add_option("--dim", syn.dim, "ambient dimension D")->check(CLI::Range(2, 1 << 20));
  syn_cmd->add_option("--kappa", syn.kappa, "concentration")->check(CLI::NonNegativeNumber);
  syn_cmd->add_option("--beta-ratio", syn.beta_ratio, "beta / kappa for kent")->check(CLI::Range(0.0, 0.4999));
  syn_cmd->add_option("-n,--count", syn.n, "number of draws")->check(CLI::PositiveNumber);
  syn_cmd->add_option("--seed", syn.seed, "sampler seed");
  syn_cmd->add_option("--out", syn.out_path, "HEMB path")->required();
  syn_cmd->callback([&] {
    action = [&] {
      std::vector<Direction> dirs;
      if (syn.kind == "vmf") {
        dirs = sample_vmf(VmfModel{Direction::axis(syn.dim, 0), syn.kappa, 1.0}, syn.n, syn.seed);
      } else {
        if (syn.dim < 3) {
          throw Error(ErrorCode::DimMismatch, "synth kent", "--dim must be >= 3");
        }
        const KentModel m{Direction::axis(syn.dim, 0), syn.kappa, syn.beta_ratio * syn.kappa,
                          Direction::axis(syn.dim, 1), Direction::axis(syn.dim, 2)};
        const KentSamples ks = sample_kent(m, syn.n, syn.seed);
        err << "heart synth: acceptance rate " << csv::number(ks.acceptance_rate) << "\n";
        if (ks.low_acceptance) {
          err << "heart synth: warning: LowAcceptance\n";
        }
        dirs = ks.directions;
      }
      EmbeddingSequence seq;
      seq.data.resize(static_cast<Index>(dirs.size()), syn.dim);
      for (std::size_t i = 0; i < dirs.size(); ++i) {
        seq.set_row(static_cast<Index>(i), dirs[i].coords());
        seq.tokens.push_back("x" + std::to_string(i));
      }
      seq.model_tag = "synth-" + syn.kind;
      seq.annotations = {{"kappa", syn.kappa}, {"seed", syn.seed}};
      if (syn.kind == "kent") {
        seq.annotations["beta_ratio"] = syn.beta_ratio;
      }
      write_sequence_file(seq, syn.out_path);
    };
  });

  // schedule
  struct {
    std::string plan_file;
    double fraction = 0.10;
    int steps = 30;
  } sch;
  auto* sch_cmd = app.add_subcommand("schedule", "first denoising step that sees edited embeddings");
  auto* frac_opt = sch_cmd->add_option("--fraction", sch.fraction, "inject fraction")->check(CLI::Range(0.0, 0.5));
  sch_cmd->add_option("--plan", sch.plan_file, "EditPlan JSON supplying inject_fraction");
  sch_cmd->add_option("--steps", sch.steps, "total denoising steps")->check(CLI::PositiveNumber);
  sch_cmd->callback([&] {
    action = [&] {
      EditPlan plan;
      if (!sch.plan_file.empty()) {
        try {
          plan = plan_from_json(json::parse(io::read_file(sch.plan_file)));
        } catch (const json::exception& e) {
          throw Error(ErrorCode::SchemaViolation, "read_plan", sch.plan_file + ": " + e.what());
        }
      }
      if (frac_opt->count() > 0 || sch.plan_file.empty()) {
        plan.inject_fraction = sch.fraction;
      }
      out << injection_schedule(plan, sch.steps) << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    // a config file that cannot be opened is an I/O problem, not bad input
    const bool io_problem = dynamic_cast<const CLI::FileError*>(&e) != nullptr;
    err << "heart: " << e.what() << "\n";
    return io_problem ? kIoError : kValidationError;
  }

  const std::string name = [&] {
    std::string n;
    for (const CLI::App* sub = &app; !sub->get_subcommands().empty();) {
      sub = sub->get_subcommands().front();
      n += (n.empty() ? "" : " ") + sub->get_name();
    }
    return n;
  }();
  try {
    if (action) {
      action();
    }
    return kOk;
  } catch (const Error& e) {
    err << "heart " << name << ": " << e.what() << "\n";
    return is_io_error(e.code()) ? kIoError : kValidationError;
  } catch (const std::exception& e) {
    err << "heart " << name << ": " << e.what() << "\n";
    return kValidationError;
  }
}

}  // namespace heart::cli
