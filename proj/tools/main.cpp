#include "commands.hpp"

int main(int argc, char** argv) {
  return ionlab::cli::run_cli(argc, argv, {std::cout, std::cerr});
}
