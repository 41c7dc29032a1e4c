#include "viewpulse/cli.hpp"

int main(int argc, char** argv) { return viewpulse::cli::run(argc, argv); }
