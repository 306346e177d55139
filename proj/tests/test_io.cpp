#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "spdelab/io.hpp"

using namespace spdelab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const char* name) : path(std::string("io_test_") + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("sha1 known answers") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  CHECK(sha1_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "84983e441c3bd26ebaae4aa1f95129e5e54670f1");
  // one block boundary case: 64 bytes forces a second padding block
  CHECK(sha1_hex(std::string(64, 'a')) == "0098ba824b5c16427bd7a1122a5a442a25ec644d");
}

TEST_CASE("mdpf dump round-trips a path bit-exactly") {
  Grid g = make_grid(2.0, 8, 0.25, 4);
  FieldPath p;
  p.frames.assign(static_cast<size_t>(g.nt) + 1, Field(static_cast<size_t>(g.nx) + 1, 0.0));
  for (int k = 0; k <= g.nt; ++k)
    for (int i = 0; i <= g.nx; ++i)
      p.frames[static_cast<size_t>(k)][static_cast<size_t>(i)] =
          std::sin(3.0 * k + 0.1 * i) * 1e-7 + k;

  TempFile f("path.mdpf");
  write_path_mdpf(f.path, g, p);
  MdpfDump d = read_path_mdpf(f.path);
  CHECK(d.version == kDumpFormatVersion);
  CHECK(d.nx == g.nx);
  CHECK(d.nt == g.nt);
  CHECK(d.L == g.L);
  CHECK(d.T == g.T);
  REQUIRE(d.path.frames.size() == p.frames.size());
  for (size_t k = 0; k < p.frames.size(); ++k)
    for (size_t i = 0; i < p.frames[k].size(); ++i)
      CHECK(d.path.frames[k][i] == p.frames[k][i]);

  // header is the documented byte layout: magic, version, nx, nt
  std::ifstream raw(f.path, std::ios::binary);
  char head[8];
  raw.read(head, 8);
  CHECK(std::string(head, 4) == "MDPF");
  CHECK(static_cast<unsigned char>(head[4]) == kDumpFormatVersion);

  FieldPath short_path;
  short_path.frames.resize(2);
  CHECK_THROWS_AS(write_path_mdpf(f.path, g, short_path), std::invalid_argument);
  CHECK_THROWS_AS(read_path_mdpf("does_not_exist.mdpf"), std::runtime_error);
}

TEST_CASE("results table prints the documented columns") {
  CheckResult a;
  a.name = "alpha";
  a.pass = true;
  a.observed = 1.0 / 3.0;
  a.target = 0.5;
  a.tolerance = 0.25;
  a.se = 0.0;
  a.runtime_s = 0.125;
  CheckResult b;
  b.name = "beta";
  b.pass = false;
  b.observed = -2.0;
  b.target = 0.0;
  b.tolerance = 1.0;

  TempFile f("results.csv");
  write_results_csv(f.path, {a, b}, {"statement line"});
  std::string text = slurp(f.path);
  CHECK(text.find("# statement line\n") == 0);
  CHECK(text.find("name,pass,observed,target,tol,se,runtime_s\n") != std::string::npos);
  CHECK(text.find("alpha,1,0.33333333333333331,0.5,0.25,0,0.125\n") != std::string::npos);
  CHECK(text.find("beta,0,-2,0,1,0,0\n") != std::string::npos);
}

TEST_CASE("field and control tables carry a role comment and the grid axes") {
  Grid g = make_grid(1.0, 4, 0.5, 2);
  Field f{0.0, 0.25, 0.5, 0.75, 1.0};
  TempFile ff("field.csv");
  write_field_csv(ff.path, g, f, 0.5, "state frame");
  std::string text = slurp(ff.path);
  CHECK(text.find("# role: state frame\n") == 0);
  CHECK(text.find("t,y,value\n") != std::string::npos);
  CHECK(text.find("0.5,-1,0\n") != std::string::npos);
  CHECK(text.find("0.5,1,1\n") != std::string::npos);

  MarkGrid marks = make_mark_grid(0.0, 1.0, 2);
  Control h = make_control(g, marks);
  h.at(1, 1) = 2.5;
  TempFile fc("control.csv");
  write_control_csv(fc.path, g, marks, h, "minimizer");
  std::string ctext = slurp(fc.path);
  CHECK(ctext.find("# role: minimizer\n") == 0);
  CHECK(ctext.find("t,a,value\n") != std::string::npos);
  CHECK(ctext.find("0.25,0.75,2.5\n") != std::string::npos);

  TempFile fp("path.csv");
  FieldPath p;
  p.frames.assign(3, f);
  write_path_csv(fp.path, g, p, "whole path");
  std::string ptext = slurp(fp.path);
  CHECK(ptext.find("# role: whole path\n") == 0);
  CHECK(ptext.find("0.5,0,0.5\n") != std::string::npos);
}

TEST_CASE("manifest records the config fingerprint and versions") {
  TempFile f("manifest.json");
  write_manifest(f.path, "check", "{ \"grid\": {} }", 42, 2, 1.5, {{"suite", "identities"}});
  std::string text = slurp(f.path);
  auto j = nlohmann::json::parse(text);
  CHECK(j["command"] == "check");
  CHECK(j["config_sha1"] == sha1_hex("{ \"grid\": {} }"));
  CHECK(j["seed"] == 42);
  CHECK(j["threads"] == 2);
  CHECK(j["suite"] == "identities");
  CHECK(j["versions"]["tool"] == kToolVersion);
  CHECK(j["wall_time_s"] == 1.5);
}
