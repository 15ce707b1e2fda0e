import argparse

COMMANDS = ("synth2d", "synth3d", "align2d", "align3d", "bench")


def get_args_parser():
    parser = argparse.ArgumentParser('', add_help=False)
    parser.add_argument('command', choices=COMMANDS,
                        help='synth2d/synth3d write a synthetic set, align2d/align3d compute landscapes, '
                             'bench times full against compressed alignment')
    parser.add_argument('--manifest', required=True, type=str, help='Run manifest (JSON)')

    # Ranks
    parser.add_argument('--rank', default=None, type=int,
                        help='Radial rank H for align2d and bench; sets both ranks for align3d')
    parser.add_argument('--rank-c', dest='rank_c', default=None, type=int, help='Radial rank H_C for volumes')
    parser.add_argument('--rank-d', dest='rank_d', default=None, type=int, help='Degree rank H_D for volumes')
    parser.add_argument('--full', action='store_true', help='Full-rank landscapes (writes the cache used by reports)')

    parser.add_argument('--betas', default=None, type=str,
                        help='Polar angles: a count M for the default grid, or a comma-separated list')
    parser.add_argument('--workers', default=None, type=int, help='Worker threads (default from settings)')
    parser.add_argument('--out', default=None, type=str, help='Output directory, overrides the manifest')

    return parser
