#include <sstream>

#include "doctest.h"

#include "shieldscan/errors.hpp"
#include "shieldscan/io.hpp"
#include "shieldscan/manifest.hpp"
#include "shieldscan/presets.hpp"
#include "shieldscan/study_io.hpp"

using namespace shieldscan;

TEST_SUITE("io") {
  TEST_CASE("shipped library applies the 0.5% line cut") {
    const auto lib = load_library(data_directory() / "library" / "i131_pu239.json");
    REQUIRE(lib.size() == 3);
    const auto& iodine = lib.nuclide(lib.index_of("I-131"));
    std::vector<double> e;
    for (const auto& l : iodine.lines) e.push_back(l.energy_mev);
    REQUIRE(e.size() == 5);
    const double want[] = {0.080185, 0.284305, 0.36449, 0.636989, 0.722911};
    for (std::size_t i = 0; i < 5; ++i) CHECK(e[i] == doctest::Approx(want[i]));
    for (const auto& l : lib.nuclide(lib.index_of("Pu-239")).lines) CHECK(l.branching_ratio >= 0.005);
    CHECK(lib.is_background(lib.background_index()));
    // a looser cut keeps more lines
    CHECK(load_library(data_directory() / "library" / "i131_pu239.json", 0.001).nuclide(0).lines.size() == 9);
  }

  TEST_CASE("library JSON round trip and validation") {
    const auto lib = load_library(data_directory() / "library" / "i131_pu239.json");
    const auto again = library_from_json(library_to_json(lib));
    CHECK(again.n_columns() == lib.n_columns());
    for (std::size_t k = 0; k < lib.n_columns(); ++k) CHECK(again.column_label(k) == lib.column_label(k));
    CHECK_THROWS_AS(library_from_json(json::parse(R"({"nuclides": [{"name": "a", "lines": []}]})")), UsageError);
    CHECK_THROWS_AS(library_from_json(json::parse(R"({"nuclides": 3})")), UsageError);
  }

  TEST_CASE("detector JSON round trip") {
    const auto spec = load_detector_spec(data_directory() / "detector" / "nai3x3.json");
    CHECK(spec.n_channels == 1024);
    CHECK(spec.energy_max == 3.0);
    CHECK(spec.fwhm(0.662) == doctest::Approx(0.080));
    const auto again = detector_from_json(detector_to_json(spec));
    CHECK(again.count_scale == spec.count_scale);
    CHECK(again.background.peaks.size() == spec.background.peaks.size());
  }

  TEST_CASE("DRF CSV round trip is exact") {
    const auto setup = load_default_setup();
    std::stringstream ss;
    write_drf_csv(ss, setup.drf, setup.library);
    const auto back = read_drf_csv(ss, setup.library);
    CHECK(back.response() == setup.drf.response());
    CHECK(back.channel_energies() == setup.drf.channel_energies());
  }

  TEST_CASE("DRF CSV header must follow the library") {
    const auto setup = load_default_setup();
    std::stringstream ss;
    write_drf_csv(ss, setup.drf, setup.library);
    std::string text = ss.str();
    text.replace(text.find("I-131"), 5, "I-132");
    std::istringstream in(text);
    CHECK_THROWS_AS(read_drf_csv(in, setup.library), UsageError);
  }

  TEST_CASE("spectrum CSV parsing") {
    std::istringstream ok("channel,count\n1,5\n2,0\n3,17\n");
    CHECK(read_spectrum_csv(ok).counts == std::vector<std::int64_t>{5, 0, 17});
    Spectrum s{{1, 2, 3}};
    std::stringstream round;
    write_spectrum_csv(round, s);
    CHECK(read_spectrum_csv(round).counts == s.counts);

    const auto message = [](const std::string& text) {
      std::istringstream in(text);
      try {
        read_spectrum_csv(in, "spec.csv");
      } catch (const UsageError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("channel,count\n1,5\n2,x\n").find("spec.csv:3") != std::string::npos);
    CHECK(message("channel,count\n1,5\n2,-1\n").find("spec.csv:3") != std::string::npos);
    CHECK(message("channel,count\n1,5\n3,1\n").find("spec.csv:3") != std::string::npos);
    CHECK(message("channel,count\n1,5,6\n").find("spec.csv:2") != std::string::npos);
    CHECK(message("chan,cnt\n1,5\n").find("spec.csv:1") != std::string::npos);
    CHECK_FALSE(message("channel,count\n").empty());
  }

  TEST_CASE("study config JSON") {
    const auto c = make_preset("table2-carbon-lead", default_x50_table());
    const auto back = study_config_from_json(study_config_to_json(c));
    CHECK(back.seed == c.seed);
    CHECK(back.presumed == c.presumed);
    CHECK(back.replicates == c.replicates);
    CHECK(back.b == c.b);
    json j = study_config_to_json(c);
    j["replicatse"] = 10;
    CHECK_THROWS_AS(study_config_from_json(j), UsageError);
    CHECK(test_label({"carbon", "lead"}) == "carbon+lead");
  }

  TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("every standard experiment has a preset") {
    const auto names = preset_names();
    const auto x50 = default_x50_table();
    std::size_t t1 = 0, t2 = 0, simple = 0, composite = 0;
    for (const auto& n : names) {
      const auto c = make_preset(n, x50);
      CHECK_NOTHROW(c.validate());
      t1 += n.rfind("table1-", 0) == 0;
      t2 += n.rfind("table2-", 0) == 0;
      simple += n.rfind("power-simple-", 0) == 0 && n.find("-wide") == std::string::npos;
      composite += n.rfind("power-composite-", 0) == 0;
    }
    CHECK(t1 == 4);
    CHECK(t2 == 6);
    CHECK(simple == 4);
    CHECK(composite == 6);
    const auto comp = make_preset("power-composite-carbon-lead", x50);
    CHECK(comp.grid.size() == 20);
    CHECK(comp.grid.back()[0] == doctest::Approx(x50.at("carbon")));
    CHECK(comp.grid[1][1] == doctest::Approx(x50.at("lead") / 19.0));
    CHECK(make_preset("sensitivity-0.00035", x50).drf_error_sd == 0.00035);
    CHECK_THROWS_AS(make_preset("table1-gold", x50), UsageError);
  }
}
