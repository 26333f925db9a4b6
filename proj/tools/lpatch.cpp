#include "lpatch/cli.hpp"

int main(int argc, char** argv) { return lpatch::run_cli(argc, argv); }
