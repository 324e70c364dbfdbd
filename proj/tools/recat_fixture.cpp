// Writes the synthetic fixture corpus and its configuration file.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "recat/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic recat fixture"};
  std::string out = "fixture";
  recat::synthetic::Options opt;
  app.add_option("out", out, "Output directory");
  app.add_option("--seed", opt.seed, "Generator seed");
  app.add_option("--per-group", opt.pubs_per_group, "Publications per 2020 group");
  CLI11_PARSE(app, argc, argv);
  try {
    recat::synthetic::write_fixture(out, opt);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  std::cout << "fixture written to " << out << '\n';
  return 0;
}
