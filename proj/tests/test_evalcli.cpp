#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "streamvc/error.hpp"
#include "streamvc/metrics.hpp"
#include "streamvc/wav.hpp"
#include "support.hpp"

using namespace streamvc;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "streamvc_evalcli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(STREAMVC_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> fields(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq != std::string::npos) out[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return out;
}

std::vector<F0Point> contour_of(const std::vector<float>& audio) {
  std::vector<float> padded(audio);
  padded.resize((audio.size() + kFrameSamples - 1) / kFrameSamples * kFrameSamples, 0.0f);
  return f0_contour(extract_pitch_energy(padded), kPccTrack);
}

std::vector<float> sweep(double f_start, double f_end, std::size_t samples) {
  std::vector<float> out(samples);
  double phase = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double f = f_start + (f_end - f_start) * i / samples;
    out[i] = static_cast<float>(0.4 * std::sin(phase));
    phase += 2.0 * std::numbers::pi * f / kSampleRate;
  }
  return out;
}

}  // namespace

TEST_CASE("PCM16 conversion and WAV round trip") {
  CHECK(float_to_pcm(std::vector<float>{0.0f, 0.5f, -1.0f, 1.0f, 2.0f, -3.0f}) ==
        std::vector<std::int16_t>{0, 16384, -32768, 32767, 32767, -32768});
  const std::vector<std::int16_t> pcm{0, 1, -1, 32767, -32768, 1234, -4321};
  CHECK(float_to_pcm(pcm_to_float(pcm)) == pcm);

  const auto path = scratch("roundtrip.wav");
  write_wav_pcm(path, pcm);
  const WavPcm back = read_wav_pcm(path);
  CHECK(back.samples == pcm);
  CHECK(back.sample_rate == 16000);
  write_wav(scratch("roundtrip2.wav"), read_wav(path));
  CHECK(slurp(path) == slurp(scratch("roundtrip2.wav")));
}

TEST_CASE("reader skips unknown chunks and rejects out-of-spec audio") {
  std::string bytes = encode_wav(std::vector<std::int16_t>{5, -5, 7});
  // Insert a LIST chunk between fmt and data.
  const std::string list = std::string("LIST") + std::string("\x04\0\0\0", 4) + "abcd";
  std::string with_list = bytes.substr(0, 36) + list + bytes.substr(36);
  CHECK(parse_wav(with_list).samples == std::vector<std::int16_t>{5, -5, 7});

  write_wav_pcm(scratch("8k.wav"), std::vector<std::int16_t>(800), 8000);
  try {
    read_wav(scratch("8k.wav"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("16000 Hz") != std::string::npos);
  }
  write_wav_pcm(scratch("stereo.wav"), std::vector<std::int16_t>(800), 16000, 2);
  CHECK_THROWS_WITH_AS(read_wav(scratch("stereo.wav")), doctest::Contains("mono"), FormatError);
  std::string float_wav = bytes;
  float_wav[20] = 3;  // IEEE float format tag
  CHECK_THROWS_WITH_AS(parse_wav(float_wav), doctest::Contains("16-bit integer PCM"), FormatError);
  CHECK_THROWS_AS(parse_wav("RIFF1234WAVX"), FormatError);
  CHECK_THROWS_AS(read_wav(scratch("nope.wav")), IoError);
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> x{1.0, 4.0, 2.0, 8.0, 5.0};
  std::vector<double> neg, aff;
  for (double v : x) {
    neg.push_back(-v);
    aff.push_back(2.0 * v + 10.0);
  }
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson(x, aff) == doctest::Approx(1.0).epsilon(1e-12));
  // Means 200; deviations (-100,0,100) and (100,0,-100): r = -20000/20000.
  CHECK(std::abs(pearson(std::vector<double>{100, 200, 300}, std::vector<double>{300, 200, 100}) + 1.0) < 1e-9);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ArgumentError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelationError);
}

TEST_CASE("f0 PCC over jointly voiced frames") {
  const std::vector<F0Point> a{{100, true}, {150, false}, {200, true}, {300, true}};
  const std::vector<F0Point> b{{300, true}, {999, true}, {200, true}, {100, true}};
  const PccResult r = f0_pcc(a, b);
  CHECK(r.jointly_voiced == 3);
  CHECK(std::abs(r.pcc + 1.0) < 1e-9);
  CHECK_THROWS_AS(f0_pcc(a, std::span(b).first(3)), ArgumentError);
  const std::vector<F0Point> silent(4, F0Point{0.0, false});
  CHECK_THROWS_AS(f0_pcc(a, silent), UndefinedCorrelationError);
}

TEST_CASE("command line") {
  const auto weights = scratch("tiny.svw");
  REQUIRE(cli("genweights --seed 5 --arch tiny --out " + weights.string()).code == 0);
  const auto weights2 = scratch("tiny2.svw");
  REQUIRE(cli("genweights --seed 5 --arch tiny --out " + weights2.string()).code == 0);
  CHECK(slurp(weights) == slurp(weights2));

  const std::size_t samples = 16000 + 123;
  auto source = testing::sine(150.0, samples, 0.4);
  write_wav(scratch("src.wav"), source);
  write_wav(scratch("tgt.wav"), testing::sine(230.0, 16000, 0.3));
  const std::string common = "--source " + scratch("src.wav").string() + " --target " + scratch("tgt.wav").string() +
                             " --weights " + weights.string() + " --arch tiny";

  SUBCASE("convert: offline and frozen streaming are byte-identical") {
    const Run off = cli("convert " + common + " --out " + scratch("off.wav").string());
    REQUIRE(off.code == 0);
    const auto f = fields(off.out);
    CHECK(f.at("architectural_ms") == "60.0");
    CHECK(f.at("frames") == "51");
    CHECK(read_wav(scratch("off.wav")).size() == samples);
    CHECK(off.out.find('\n') == off.out.size() - 1);

    const Run str = cli("convert " + common + " --mode streaming --freeze-whitening --out " +
                        scratch("str.wav").string());
    REQUIRE(str.code == 0);
    CHECK(fields(str.out).at("first_emission_step") == "3");
    CHECK(fields(str.out).count("compute_ms_mean") == 1);
    CHECK(slurp(scratch("off.wav")) == slurp(scratch("str.wav")));

    const Run run = cli("convert " + common + " --mode streaming --out " + scratch("run.wav").string());
    CHECK(run.code == 0);
    CHECK(read_wav(scratch("run.wav")).size() == samples);
  }

  SUBCASE("convert: 8 kHz source is an input-format error") {
    write_wav_pcm(scratch("src8k.wav"), float_to_pcm(testing::sine(150.0, 8000)), 8000);
    const Run r = cli("convert --source " + scratch("src8k.wav").string() + " --target " +
                      scratch("tgt.wav").string() + " --weights " + weights.string() + " --arch tiny --out " +
                      scratch("x.wav").string());
    CHECK(r.code == 3);
    CHECK(r.out.find("16000 Hz") != std::string::npos);
  }

  SUBCASE("usage and format errors") {
    CHECK(cli("").code == 2);
    CHECK(cli("convert --source a.wav").code == 2);
    CHECK(cli("convert " + common + " --mode sideways --out x.wav").code == 2);
    std::ofstream(scratch("garbage.svw")) << "SVW1\nnot a header\n";
    const Run r = cli("profile --weights " + scratch("garbage.svw").string() + " --arch tiny --seconds 0.1");
    CHECK(r.code == 3);
    const Run full = cli("profile --weights " + weights.string() + " --seconds 0.1");
    CHECK(full.code == 3);
    CHECK(full.out.find("content.") != std::string::npos);
  }

  SUBCASE("pitch CSV") {
    const Run r = cli("pitch --in " + scratch("src.wav").string() + " --csv " + scratch("p.csv").string());
    REQUIRE(r.code == 0);
    std::istringstream csv(slurp(scratch("p.csv")));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "frame,energy,f0_05,cmnd_05,uv_05,f0_10,cmnd_10,uv_10,f0_15,cmnd_15,uv_15");
    std::vector<std::vector<double>> rows;
    while (std::getline(csv, line)) {
      std::vector<double> row;
      std::istringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
      CHECK(row.size() == 11);
      rows.push_back(row);
    }
    CHECK(rows.size() == 51);
    for (std::size_t t = 1; t + 2 < rows.size(); ++t) CHECK(std::abs(rows[t][5] - 150.0) < 2.0);

    write_wav(scratch("one_second_200.wav"), testing::sine(200.0, 16000, 0.5));
    REQUIRE(cli("pitch --in " + scratch("one_second_200.wav").string() + " --csv " + scratch("q.csv").string())
                .code == 0);
    std::istringstream q(slurp(scratch("q.csv")));
    std::getline(q, line);
    int count = 0;
    while (std::getline(q, line)) {
      std::vector<double> row;
      std::istringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
      if (count > 0 && count < 49) CHECK(std::abs(row[5] - 200.0) <= 2.0);
      ++count;
    }
    CHECK(count == 50);

    write_wav(scratch("silence.wav"), std::vector<float>(16000, 0.0f));
    REQUIRE(cli("pitch --in " + scratch("silence.wav").string() + " --csv " + scratch("s.csv").string()).code == 0);
    std::istringstream s(slurp(scratch("s.csv")));
    std::getline(s, line);
    while (std::getline(s, line)) {
      std::vector<std::string> cells;
      std::istringstream in(line);
      std::string cell;
      while (std::getline(in, cell, ',')) cells.push_back(cell);
      CHECK(cells[4] == "1");
      CHECK(cells[7] == "1");
      CHECK(cells[10] == "1");
    }
    CHECK(cli("pitch --in " + scratch("missing.wav").string() + " --csv " + scratch("m.csv").string()).code == 3);
  }

  SUBCASE("pcc") {
    const Run same = cli("pcc --a " + scratch("src.wav").string() + " --b " + scratch("src.wav").string());
    REQUIRE(same.code == 0);
    CHECK(fields(same.out).at("pcc") == "1.0000");

    write_wav(scratch("silence.wav"), std::vector<float>(samples, 0.0f));
    const Run undefined = cli("pcc --a " + scratch("src.wav").string() + " --b " + scratch("silence.wav").string());
    CHECK(undefined.code == 3);
    CHECK(undefined.out.find("jointly voiced") != std::string::npos);

    // 150 Hz tone against a 150 -> 300 Hz sweep; the expected value comes
    // from a direct Pearson evaluation over the jointly voiced frames.
    const auto tone = testing::sine(150.0, 2 * 16000, 0.4);
    const auto glide = sweep(150.0, 300.0, 2 * 16000);
    write_wav(scratch("tone.wav"), tone);
    write_wav(scratch("sweep.wav"), glide);
    const auto ca = contour_of(read_wav(scratch("tone.wav")));
    const auto cb = contour_of(read_wav(scratch("sweep.wav")));
    std::vector<double> xa, xb;
    for (std::size_t t = 0; t < ca.size(); ++t) {
      if (ca[t].voiced && cb[t].voiced) {
        xa.push_back(ca[t].hz);
        xb.push_back(cb[t].hz);
      }
    }
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
      ma += xa[i];
      mb += xb[i];
    }
    ma /= xa.size();
    mb /= xb.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
      sab += (xa[i] - ma) * (xb[i] - mb);
      saa += (xa[i] - ma) * (xa[i] - ma);
      sbb += (xb[i] - mb) * (xb[i] - mb);
    }
    const double expected = sab / std::sqrt(saa * sbb);
    const Run r = cli("pcc --a " + scratch("tone.wav").string() + " --b " + scratch("sweep.wav").string());
    REQUIRE(r.code == 0);
    const auto f = fields(r.out);
    CHECK(std::stoul(f.at("jointly_voiced")) == xa.size());
    CHECK(std::abs(std::stod(f.at("pcc")) - expected) < 1e-3);
  }

  SUBCASE("profile") {
    const Run r = cli("profile --weights " + weights.string() + " --arch tiny --seconds 0.5");
    REQUIRE(r.code == 0);
    const auto f = fields(r.out);
    CHECK(f.at("architectural_ms") == "60.0");
    const double compute = std::stod(f.at("compute_ms"));
    CHECK(std::abs(std::stod(f.at("rtf")) - compute / 20.0) < 1e-3);
  }
}
