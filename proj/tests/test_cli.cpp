#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "invshape/cli/image.hpp"
#include "invshape/data/container.hpp"

namespace fs = std::filesystem;
using namespace invshape;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "invshape_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args) {
  const fs::path log = work_dir() / "last_output.txt";
  const std::string cmd = std::string("\"") + INVSHAPE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string read_header(const fs::path& p, int fields) {
  std::ifstream in(p, std::ios::binary);
  std::string out, tok;
  for (int k = 0; k < fields && (in >> tok); ++k) out += (k ? " " : "") + tok;
  return out;
}

}  // namespace

TEST(Cli, GenDataWritesContainer) {
  const fs::path out = work_dir() / "d.ffd";
  const Result r = run("gen-data --seed 7 --n 20 --h 32 --w 128 --out " + q(out));
  ASSERT_EQ(r.status, 0) << r.output;
  const Dataset d = read_container(out);
  EXPECT_EQ(d.size(), 20u);
  EXPECT_EQ(d.height(), 32u);
  EXPECT_EQ(d.width(), 128u);
  EXPECT_EQ(d.train.size(), 16u);
  EXPECT_FALSE(d.normalization.empty());

  // Identical arguments reproduce identical bytes.
  const fs::path again = work_dir() / "d2.ffd";
  ASSERT_EQ(run("gen-data --seed 7 --n 20 --h 32 --w 128 --out " + q(again)).status, 0);
  EXPECT_EQ(io::read_file(out), io::read_file(again));
}

TEST(Cli, MissingInputNamesPath) {
  const Result r = run("train-unet --data missing.ffd --out " + q(work_dir() / "u.ckpt"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing.ffd"), std::string::npos) << r.output;
  EXPECT_EQ(r.output.rfind("error: ", 0), 0u) << r.output;
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1) << r.output;
}

TEST(Cli, UnknownSubcommandAndFlag) {
  const Result a = run("frobnicate");
  EXPECT_NE(a.status, 0);
  EXPECT_NE(a.output.find("error: usage"), std::string::npos) << a.output;
  const Result b = run("gen-data --n 2 --out x.ffd --bogus 1");
  EXPECT_NE(b.status, 0);
  EXPECT_NE(b.output.find("error: usage"), std::string::npos) << b.output;
}

TEST(Cli, ConfigFileKeys) {
  const fs::path cfg = work_dir() / "gen.cfg";
  const fs::path out = work_dir() / "cfg.ffd";
  {
    std::ofstream c(cfg);
    c << "# generator defaults\nn=6\nh=16\nw=32\nseed=3\nmax_objects=1\n";
  }
  const Result ok = run("--config " + q(cfg) + " gen-data --out " + q(out));
  ASSERT_EQ(ok.status, 0) << ok.output;
  EXPECT_EQ(read_container(out).size(), 6u);
  // Command-line values win over the file.
  ASSERT_EQ(run("--config " + q(cfg) + " gen-data --n 4 --out " + q(out)).status, 0);
  EXPECT_EQ(read_container(out).size(), 4u);

  {
    std::ofstream c(cfg);
    c << "n=6\nlearning_speed=3\n";
  }
  const Result bad = run("--config " + q(cfg) + " gen-data --out " + q(out));
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.output.find("learning_speed"), std::string::npos) << bad.output;
  EXPECT_NE(bad.output.find("error: config"), std::string::npos) << bad.output;
}

TEST(Cli, RenderSizes) {
  const fs::path data = work_dir() / "r.ffd";
  ASSERT_EQ(run("gen-data --seed 2 --n 4 --h 64 --w 256 --out " + q(data)).status, 0);
  const fs::path one = work_dir() / "u.ppm", all = work_dir() / "all.ppm", geo = work_dir() / "g.ppm";
  ASSERT_EQ(run("render --data " + q(data) + " --index 0 --channel u --out " + q(one)).status, 0);
  ASSERT_EQ(run("render --data " + q(data) + " --index 1 --channel all --out " + q(all)).status, 0);
  ASSERT_EQ(run("render --data " + q(data) + " --index 1 --channel geometry --out " + q(geo)).status, 0);
  EXPECT_EQ(read_header(one, 4), "P6 256 64 255");
  EXPECT_EQ(read_header(all, 4), "P6 256 200 255");
  EXPECT_EQ(read_header(geo, 4), "P6 256 64 255");
  EXPECT_EQ(fs::file_size(one), std::string("P6\n256 64\n255\n").size() + 256 * 64 * 3);

  const Result bounds = run("render --data " + q(data) + " --index 0 --channel p --min 2 --max 1 --out " + q(one));
  EXPECT_NE(bounds.status, 0);
  EXPECT_NE(bounds.output.find("error: "), std::string::npos);
}

TEST(Cli, ConstantFieldRendersMidColor) {
  GridField f(4, 6, 3);
  GeometryMap g(4, 6);
  g(1, 2) = 1.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) f(i, j, 2) = g.solid(i, j) ? 0.0 : 3.0;
  const Image img = render_channel(f, 2, &g, RenderOptions{});
  const Rgb mid = img.at(0, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      if (g.solid(i, j)) EXPECT_EQ(img.at(i, j), (Rgb{0, 0, 0}));
      else EXPECT_EQ(img.at(i, j), mid);
    }
  EXPECT_EQ(mid, blue_white_red(0.5));
}

TEST(Cli, PgmRoundTrip) {
  GeometryMap g(3, 5);
  g(1, 1) = 1.0;
  g(2, 4) = 1.0;
  const GeometryMap back = decode_pgm(encode_pgm(g));
  EXPECT_TRUE(bitwise_equal(back.values(), g.values()));
  std::vector<unsigned char> bad = encode_pgm(g);
  bad[1] = '6';
  EXPECT_THROW(decode_pgm(bad), FormatError);
}

TEST(Cli, EndToEndSmallPipeline) {
  const fs::path d = work_dir() / "e2e.ffd", u = work_dir() / "e2e_u.ckpt", l = work_dir() / "e2e_l.ckpt";
  ASSERT_EQ(run("gen-data --seed 1 --n 8 --h 32 --w 32 --max-objects 1 --out " + q(d)).status, 0);
  const Result tr = run("train-unet --data " + q(d) + " --out " + q(u) +
                        " --epochs 1 --base-channels 4 --depth 2 --lr 1e-3");
  ASSERT_EQ(tr.status, 0) << tr.output;
  const Result pre = run("pretrain-stn --data " + q(d) + " --out " + q(l) + " --iterations 2 --held-out 2");
  // Two iterations cannot reach the threshold; the checkpoint is still written.
  EXPECT_TRUE(pre.status == 0 || pre.status == 4) << pre.output;
  ASSERT_TRUE(fs::exists(l));
  const fs::path targets = work_dir() / "t.cfg";
  {
    std::ofstream t(targets);
    t << "mode=constraints+geometry\nreference_geometry=" << (d.string() + ":1") << "\n";
  }
  const fs::path run_dir = work_dir() / "run";
  const Result opt = run("optimize --unet " + q(u) + " --loc " + q(l) + " --init " + q(d) + ":0" +
                         " --targets " + q(targets) + " --out " + q(run_dir) + " --iterations 3 --validate-oracle");
  ASSERT_EQ(opt.status, 0) << opt.output;
  EXPECT_TRUE(fs::exists(run_dir / "metrics.tsv"));
  EXPECT_TRUE(fs::exists(run_dir / "validation.tsv"));
  const Result ev = run("evaluate --unet " + q(u) + " --data " + q(d) + " --out " + q(work_dir() / "eval"));
  ASSERT_EQ(ev.status, 0) << ev.output;
}
