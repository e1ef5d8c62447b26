import json

import pandas as pd

GROUP_COLUMNS = ['Frontal', 'Oblique', 'Lateral', 'Mean']


def metrics_json(report, per_query=False, matches=None):
    data = report.to_dict(per_query=per_query)
    if matches:
        data['matches'] = matches
    return json.dumps(data, sort_keys=True, indent=2)


def metrics_text(report):
    rows = {'mAP': report.mAP}
    rows.update({f'Rank-{k}': value for k, value in sorted(report.ranks.items())})
    frame = pd.DataFrame([rows])
    return frame.to_string(index=False, float_format=lambda v: f'{v:.4f}') + (
        f'\nvalid queries: {report.valid}, excluded: {report.excluded}')


def casia_frame(reports):
    """One row per probe condition, grouped accuracies in percent."""
    return pd.DataFrame(
        [[r.frontal, r.oblique, r.lateral, r.mean] for r in reports],
        index=pd.Index([r.condition for r in reports], name='Probe'),
        columns=GROUP_COLUMNS,
    )


def casia_text(reports):
    return casia_frame(reports).to_string(float_format=lambda v: f'{v:.1f}')


def casia_json(reports):
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)
