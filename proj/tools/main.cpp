#include "cli.hpp"

int main(int argc, char** argv) { return difr::cli::run({argv, argv + argc}); }
