#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "shine/errors.hpp"
#include "shine/runconfig.hpp"

using namespace shine;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("shine_runconfig_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

template <class Fn>
void expect_errc(Fn&& fn, Errc want) {
  try {
    fn();
    FAIL_CHECK("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == want);
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("defaults carry the published operating point") {
  const RunConfig rc;
  CHECK(rc.loss.coarse.h1 == 1.0);
  CHECK(rc.loss.coarse.h2 == 2.0);
  CHECK(rc.loss.coarse.q == 8);
  for (double m : rc.loss.fine.margins) CHECK(m == 0.25);
  for (bool a : rc.loss.fine.active) CHECK(a);
  CHECK(rc.loss.alpha == 1.0);
  CHECK(rc.loss.beta == 1.0);
  CHECK(rc.loss.use_coarse);
  CHECK(rc.loss.use_fine);
  CHECK_FALSE(rc.loss.replace_saliency);
  CHECK(rc.loss.fine.mode == FineMode::relative);
  CHECK(rc.forge.ratios == std::array<double, 3>{0.25, 0.50, 0.75});
  CHECK_FALSE(rc.forge.use_llm);
  CHECK(rc.llm.api_key_env == "SHINE_API_KEY");

  const auto kv = dump_kv(rc);
  CHECK(kv.at("loss.h1") == "1.0");
  CHECK(kv.at("loss.h2") == "2.0");
  CHECK(kv.at("loss.q") == "8");
  CHECK(kv.at("loss.margins") == "0.25,0.25,0.25,0.25");
  CHECK(kv.at("loss.mode") == "relative");
  CHECK(kv.at("loss.active") == "true,true,true,true");
  CHECK(kv.at("forge.filler") == "lexicon");
  CHECK(kv.at("ablate.grid") == "default");
  CHECK(kv.at("seeds") == "1,2,3");
}

TEST_CASE("apply_kv reaches every namespace") {
  RunConfig rc;
  apply_kv(rc, "synth.clips", "48");
  CHECK(rc.synth.clips == 48);
  apply_kv(rc, "synth.noise_sigma", "0.125");
  CHECK(rc.synth.noise_sigma == 0.125);
  apply_kv(rc, "synth.seed", "99");
  CHECK(rc.synth_seed == 99);

  apply_kv(rc, "forge.filler", "llm");
  CHECK(rc.forge.use_llm);
  apply_kv(rc, "forge.filler", "lexicon");
  CHECK_FALSE(rc.forge.use_llm);
  apply_kv(rc, "forge.ratios", "0.1, 0.2, 0.9");
  CHECK(rc.forge.ratios == std::array<double, 3>{0.1, 0.2, 0.9});

  apply_kv(rc, "llm.endpoint", "http://localhost:8089");
  CHECK(rc.llm.base_url == "http://localhost:8089");
  apply_kv(rc, "llm.subset_size", "12");
  CHECK(rc.forge.prompt.dict_subset_size == 12);

  apply_kv(rc, "model.d_h", "24");
  CHECK(rc.model.d_h == 24);

  apply_kv(rc, "loss.mode", "absolute");
  CHECK(rc.loss.fine.mode == FineMode::absolute);
  apply_kv(rc, "loss.active", "true,false,on,0");
  CHECK(rc.loss.fine.active == std::array<bool, 4>{true, false, true, false});
  apply_kv(rc, "loss.margins", "0.1,0.2,0.3,0.4");
  CHECK(rc.loss.fine.margins == std::array<double, 4>{0.1, 0.2, 0.3, 0.4});
  apply_kv(rc, "loss.replace_saliency", "yes");
  CHECK(rc.loss.replace_saliency);

  apply_kv(rc, "train.lr", "1e-2");
  CHECK(rc.train_lr == 0.01);
  apply_kv(rc, "train.eval_every", "0");
  CHECK(rc.train_eval_every == 0);

  apply_kv(rc, "seeds", "7, 8, 9, 10");
  CHECK(rc.seeds == std::vector<std::uint64_t>{7, 8, 9, 10});
  apply_kv(rc, "ablate.grid", "fine_abs");
  CHECK(rc.ablate_grid == "fine_abs");
  apply_kv(rc, "out.dir", "elsewhere");
  CHECK(rc.out_dir == "elsewhere");

  // Keys and values are trimmed.
  apply_kv(rc, "  train.epochs ", " 5 ");
  CHECK(rc.train_epochs == 5);
}

TEST_CASE("apply_kv rejects unknown keys and malformed values") {
  RunConfig rc;
  expect_errc([&] { apply_kv(rc, "bogus.key", "1"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "loss", "1"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "train.lr", "fast"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "train.lr", "1.5x"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "train.lr", "inf"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "train.epochs", "2.5"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "train.seed", "-3"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "loss.use_fine", "maybe"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "forge.filler", "dice"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "forge.ratios", "0.1,0.2"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "loss.margins", "0.1,0.2,0.3"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "loss.active", "true"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "loss.mode", "both"); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "ablate.grid", "everything"); },
              Errc::config_error);
  expect_errc([&] { apply_kv(rc, "out.dir", ""); }, Errc::config_error);
  expect_errc([&] { apply_kv(rc, "seeds", ""); }, Errc::config_error);

  // A failed setter must leave earlier state intact.
  apply_kv(rc, "train.epochs", "11");
  expect_errc([&] { apply_kv(rc, "train.epochs", "soon"); },
              Errc::config_error);
  CHECK(rc.train_epochs == 11);
}

TEST_CASE("config files: comments, blanks, duplicates, and errors") {
  TempDir tmp;
  const std::string path = tmp.file("run.cfg");
  write_file(path,
             "# comment line\n"
             "\n"
             "train.lr = 0.5   # trailing comment\n"
             "  train.epochs=7\n"
             "train.lr = 0.25\n");
  RunConfig rc;
  load_config_file(rc, path);
  CHECK(rc.train_lr == 0.25);  // later lines win
  CHECK(rc.train_epochs == 7);

  RunConfig fresh;
  expect_errc([&] { load_config_file(fresh, tmp.file("absent.cfg")); },
              Errc::config_error);

  const std::string broken = tmp.file("broken.cfg");
  write_file(broken, "train.lr = 0.5\njust words\n");
  try {
    load_config_file(fresh, broken);
    FAIL_CHECK("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config_error);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const std::string unknown = tmp.file("unknown.cfg");
  write_file(unknown, "nope = 1\n");
  expect_errc([&] { load_config_file(fresh, unknown); }, Errc::config_error);
}

TEST_CASE("canonical dump round-trips through the file parser") {
  RunConfig rc;
  apply_kv(rc, "loss.mode", "absolute");
  apply_kv(rc, "loss.margins", "0.5,0.25,0.125,0.0625");
  apply_kv(rc, "forge.filler", "llm");
  apply_kv(rc, "llm.endpoint", "http://localhost:9999/v1");
  apply_kv(rc, "seeds", "11,12");
  apply_kv(rc, "train.lr", "0.375");
  apply_kv(rc, "synth.noise_sigma", "0.015625");

  TempDir tmp;
  const std::string path = tmp.file("canon.cfg");
  write_file(path, to_canonical(rc));
  RunConfig back;
  load_config_file(back, path);
  CHECK(dump_kv(back) == dump_kv(rc));
  CHECK(config_fingerprint(back) == config_fingerprint(rc));
}

TEST_CASE("fingerprint tracks every key except out.dir") {
  RunConfig rc;
  const std::string base = config_fingerprint(rc);
  CHECK(base.size() == 16);
  CHECK(base.find_first_not_of("0123456789abcdef") == std::string::npos);

  // Same settings, same fingerprint.
  CHECK(config_fingerprint(RunConfig{}) == base);

  // Every individual key flip moves the fingerprint.
  const std::map<std::string, std::string> flips = {
      {"synth.clips", "48"},        {"synth.seed", "2"},
      {"forge.seed", "8"},          {"forge.filler", "llm"},
      {"llm.model", "other"},       {"model.d_h", "48"},
      {"loss.h1", "1.5"},           {"loss.q", "4"},
      {"loss.mode", "absolute"},    {"loss.active", "true,true,true,false"},
      {"train.lr", "0.125"},        {"train.seed", "5"},
      {"seeds", "1,2"},             {"ablate.grid", "coarse"},
  };
  for (const auto& [key, value] : flips) {
    RunConfig changed;
    apply_kv(changed, key, value);
    CAPTURE(key);
    CHECK(config_fingerprint(changed) != base);
  }

  // The output root is plumbing, not configuration.
  RunConfig moved;
  apply_kv(moved, "out.dir", "/somewhere/else");
  CHECK(config_fingerprint(moved) == base);
  CHECK(run_dir(moved) == "/somewhere/else/" + base);
  CHECK(run_dir(rc) == "runs/" + base);
}
